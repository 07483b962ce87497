# tfqkd/optimization/__init__.py
from .optimizer import expected_rate, grid_scan, optimize, scan, scan_csv
