from numbers import Integral, Real
from pathlib import Path

COMMANDS = ('analyze', 'simulate', 'verify', 'converge', 'report')


def _is_int(value) -> bool:
    return isinstance(value, Integral) and not isinstance(value, bool)


def _is_real(value) -> bool:
    return isinstance(value, Real) and not isinstance(value, bool)


def validate_chain_document(document):
    try:
        if not isinstance(document, dict):
            return False, "Chain document must be a JSON object"

        for key in ('states', 'transition', 'initial'):
            if key not in document:
                return False, f"Missing '{key}' field"

        states = document['states']
        if not isinstance(states, list) or not states:
            return False, "States must be a nonempty list"
        if not all(_is_int(s) for s in states):
            return False, "States must be integers"

        transition = document['transition']
        if not isinstance(transition, list) or len(transition) != len(states):
            return False, f"Transition must have {len(states)} rows"
        for i, row in enumerate(transition):
            if not isinstance(row, list) or len(row) != len(states):
                return False, f"Transition row {i} must have {len(states)} entries"
            if not all(_is_real(p) for p in row):
                return False, f"Transition row {i} must hold numbers"

        initial = document['initial']
        if not isinstance(initial, list) or len(initial) != len(states):
            return False, f"Initial must have {len(states)} entries"
        if not all(_is_real(p) for p in initial):
            return False, "Initial must hold numbers"

        return True, None
    except Exception as e:
        return False, f"Chain validation error: {str(e)}"


def validate_config_document(document):
    try:
        if not isinstance(document, dict):
            return False, "Config must be a JSON object"

        command = document.get('command')
        if command not in COMMANDS:
            return False, f"Unknown command {command!r}; expected one of {', '.join(COMMANDS)}"

        if 'seed' not in document or document['seed'] is None:
            return False, "Missing 'seed' field"
        if not _is_int(document['seed']) or not 0 <= document['seed'] < 2 ** 64:
            return False, "Seed must be an unsigned 64-bit integer"

        if not document.get('out'):
            return False, "Missing 'out' field"

        if command == 'report':
            inputs = document.get('inputs') or []
            if not inputs:
                return False, "Report needs at least one input run directory"
            for run_dir in inputs:
                if not (Path(run_dir) / 'manifest.json').is_file():
                    return False, f"Input run {run_dir} has no manifest.json"
        else:
            chain_file = document.get('chain_file')
            if not chain_file:
                return False, "Missing 'chain_file' field"
            if not Path(chain_file).is_file():
                return False, f"Chain file {chain_file} does not exist"

        for key, value in document.items():
            if key == 'inputs' and command != 'report':
                continue
            if isinstance(value, list) and not value:
                return False, f"List parameter '{key}' must be nonempty"

        return True, None
    except Exception as e:
        return False, str(e)
