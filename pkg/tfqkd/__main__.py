# tfqkd/__main__.py
from .main import run_cli

raise SystemExit(run_cli())
