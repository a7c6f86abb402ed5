#!/usr/bin/env python3
import sys
from pathlib import Path

from config import DEFAULT_SEED
from src.chain_model import load_chain, mean_drift
from src.errors import VerificationError
from src.exact_law import period_structure
from src.spectral import sigma_squared, strong_aperiodicity_exact, strong_aperiodicity_numeric


def summarize_chain(chain_path):
    if not Path(chain_path).exists():
        print(f"❌ ERROR: File not found: {chain_path}")
        return

    print(f"📄 Chain: {chain_path}")
    print(f"{'='*60}")

    try:
        chain = load_chain(chain_path)
        print(f"✅ Chain loaded ({chain.size} states, labels {list(chain.states)})")
        print(f"   Stationary: {[round(p, 6) for p in chain.stationary.tolist()]}")
        print(f"   Drift: {mean_drift(chain):.3e}")

        aperiodic, certificate = strong_aperiodicity_exact(chain)
        report = strong_aperiodicity_numeric(chain)
        print(f"\n🔍 APERIODICITY:")
        print(f"   Exact lattice test: {'strongly aperiodic' if aperiodic else 'NOT strongly aperiodic'}")
        print(f"   Spectral scan sup radius: {report.sup_radius:.10f}")
        if certificate.witness_t is not None:
            print(f"   Witness t = {certificate.witness_t:.6f}, theta = {certificate.witness_theta:.6f}")

        structure = period_structure(chain)
        print(f"   Lattice span {structure.lattice_span}, period {structure.period}")

        print(f"\n📊 VARIANCE:")
        for method in ('curvature', 'autocovariance'):
            print(f"   sigma^2 ({method}): {sigma_squared(chain, method):.8f}")
        mc = sigma_squared(chain, 'monte_carlo', n=1000, paths=2000, seed=DEFAULT_SEED)
        print(f"   sigma^2 (monte carlo, seed {DEFAULT_SEED}): {mc:.4f}")
    except VerificationError as e:
        print(f"❌ {type(e).__name__}: {str(e)}")

    print(f"\n{'='*60}")


if len(sys.argv) < 2:
    print("Usage: python quick_test.py <chain.json>")
    print("Example: python quick_test.py chains/three_cycle.json")
    sys.exit(1)

summarize_chain(sys.argv[1])
