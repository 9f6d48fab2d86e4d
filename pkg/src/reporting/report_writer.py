"""
report writer module
writes deterministic csv/json artifacts and a manifest of their content hashes
"""

import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd
from cryptography.hazmat.primitives import hashes

from common.errors import ReportError

logger = logging.getLogger(__name__)

FORMATS = ('csv', 'json')
MANIFEST = 'manifest.json'


def plain(value):
    """convert numpy scalars/arrays and tuples into json-native values"""
    if isinstance(value, dict):
        return {str(k): plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return plain(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, Path):
        return str(value)
    return value


def to_json(obj):
    return json.dumps(plain(obj), sort_keys=True, indent=2) + '\n'


def sha256_hex(data):
    digest = hashes.Hash(hashes.SHA256())
    digest.update(data)
    return digest.finalize().hex()


def read_csv(path):
    """read a report csv back with exact doubles"""
    return pd.read_csv(path, float_precision='round_trip')


def _as_rows(records):
    rows = []
    for record in records:
        if hasattr(record, 'to_rows'):
            rows.extend(record.to_rows())
        elif hasattr(record, 'to_record'):
            rows.append(record.to_record())
        else:
            rows.append(record)
    return rows


class ReportWriter:
    """collects the artifacts of one command run under an output directory"""

    def __init__(self, output_dir):
        """
        args:
            output_dir: directory for all artifacts, created on first write
        """
        self.output_dir = Path(output_dir)
        self.artifacts = []

    def _prepare(self, name):
        try:
            self.output_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ReportError(f"cannot create output directory {self.output_dir}: {e}")
        return self.output_dir / name

    def _write(self, path, text):
        try:
            with open(path, 'w', newline='') as f:
                f.write(text)
        except OSError as e:
            raise ReportError(f"cannot write {path}: {e}")
        if path.name not in self.artifacts:
            self.artifacts.append(path.name)
        logger.debug("wrote %s", path)
        return path

    def emit_report(self, name, records, fmt):
        """
        write records as csv (one row each, fixed column order) or json

        args:
            name: file stem
            records: non-empty list of dicts or report objects
            fmt: 'csv' or 'json'

        returns:
            path of the written file
        """
        if fmt not in FORMATS:
            raise ReportError(f"unknown report format '{fmt}', must be one of {list(FORMATS)}")
        if records is None or len(records) == 0:
            raise ReportError(f"refusing to write empty report '{name}'")

        if fmt == 'json':
            payload = [r.to_record() if hasattr(r, 'to_record') else r for r in records]
            if len(payload) == 1:
                payload = payload[0]
            return self._write(self._prepare(f'{name}.json'), to_json(payload))

        rows = _as_rows(records)
        if not rows:
            raise ReportError(f"refusing to write empty report '{name}'")
        columns = list(rows[0].keys())
        for row in rows[1:]:
            for key in row:
                if key not in columns:
                    columns.append(key)
        frame = pd.DataFrame([plain(r) for r in rows], columns=columns)
        text = frame.to_csv(index=False, float_format='%.17g', lineterminator='\n')
        return self._write(self._prepare(f'{name}.csv'), text)

    def emit_text(self, name, lines):
        """plain text artifact such as a summary table"""
        return self._write(self._prepare(name), '\n'.join(lines) + '\n')

    def emit_frame(self, name, frame):
        """csv from a DataFrame, e.g. a traced level curve"""
        if frame.empty:
            raise ReportError(f"refusing to write empty report '{name}'")
        text = frame.to_csv(index=False, float_format='%.17g', lineterminator='\n')
        return self._write(self._prepare(f'{name}.csv'), text)

    def write_manifest(self):
        """
        manifest.json mapping every artifact to its sha256

        returns:
            path of the manifest
        """
        if not self.artifacts:
            raise ReportError("no artifacts to list in the manifest")
        entries = {}
        for name in sorted(self.artifacts):
            path = self.output_dir / name
            try:
                entries[name] = {'sha256': sha256_hex(path.read_bytes()), 'bytes': path.stat().st_size}
            except OSError as e:
                raise ReportError(f"cannot hash {path}: {e}")
        path = self.output_dir / MANIFEST
        try:
            path.write_text(to_json({'artifacts': entries}))
        except OSError as e:
            raise ReportError(f"cannot write {path}: {e}")
        return path


def fit_summary_table(fits):
    """human-readable table of SingularActionFit results"""
    lines = [f"{'factor':>6}  {'psi0':>12}  {'stderr':>9}  {'max_residual':>12}  {'cond':>9}"]
    for fit in fits:
        lines.append(
            f"{fit.factor_index:>6}  {fit.psi0:>12.8f}  {fit.psi0_stderr:>9.1e}  "
            f"{fit.max_residual:>12.3e}  {fit.condition_number:>9.2e}"
        )
    for fit in fits:
        lines.append(f"psi0 = {fit.psi0:.4f} ± {max(fit.psi0_stderr, 0.0):.0e}")
    return lines
