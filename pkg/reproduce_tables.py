# reproduce_tables.py
# A standalone script that runs the bundled field tallies through the full
# analysis and prints reproduced values next to the published ones.

import json
import os

from tfqkd.core import PARAMETER_SETS, distance_channel
from tfqkd.estimation.keyrate import analyze
from tfqkd.models import archive_report, get_db
from tfqkd.schemas import ChannelConfig, SecurityParams
from tfqkd.utils.tally_io import emit_report, read_tally_file

# --- Run Configuration ---
DATA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "tests", "data")
DISTANCES = [202, 303, 404, 505, 1002]
MODE = "finite"
ARCHIVE = False

COLUMNS = [
    ("n1_pre", "n1_pre", "{:.3e}"),
    ("n1", "n1", "{:.3e}"),
    ("n_t", "n_t", "{:.3e}"),
    ("e1ph_pre", "e1ph_pre", "{:.4f}"),
    ("e1ph", "e1ph", "{:.4f}"),
    ("e_x", "e_x", "{:.4f}"),
    ("r_per_pulse", "r_per_pulse", "{:.3e}"),
]


def load_published():
    with open(os.path.join(DATA_DIR, "published.json")) as f:
        return {int(k): v for k, v in json.load(f).items()}


def channel_for(metadata) -> ChannelConfig:
    template = ChannelConfig.long_haul() if metadata.parameter_set == "1" else ChannelConfig.metro()
    ch = distance_channel(template, metadata.distance_km)
    return ch.model_copy(update={"clock_hz": metadata.clock_hz or ch.clock_hz})


def main():
    print("--- Reproducing published results ---")
    published = load_published()
    db = next(get_db()) if ARCHIVE else None

    try:
        for distance in DISTANCES:
            path = os.path.join(DATA_DIR, f"tally_{distance}km.json")
            tally, metadata = read_tally_file(path)
            params = PARAMETER_SETS[metadata.parameter_set]
            report = analyze(tally, params, SecurityParams(), channel_for(metadata), mode=MODE)

            print(f"\n{distance} km (parameter set {metadata.parameter_set}, N = {tally.n_total:.3e})")
            print(f"  {'quantity':<12} {'published':>12} {'reproduced':>12}")
            values = report.model_dump()
            for label, key, fmt in COLUMNS:
                ours = values.get(key)
                print(f"  {label:<12} {fmt.format(published[distance][key]):>12} "
                      f"{fmt.format(ours) if ours is not None else '-':>12}")
            print(f"  {'bits/s':<12} {published[distance]['r_bps']:>12.4g} {report.r_bits_per_second:>12.4g}")
            if report.plob_margin is not None:
                print(f"  PLOB margin: {report.plob_margin:.3g}")
            if report.vacuous:
                print(f"  WARNING: vacuous estimate ({'; '.join(report.reasons)})")

            if db is not None:
                archive_report(db, "reproduce", emit_report(report), source_path=path, distance_km=distance,
                               r_per_pulse=report.r_per_pulse, total_secure_bits=report.total_secure_bits,
                               vacuous=int(report.vacuous))
    finally:
        if db is not None:
            db.close()

    print("\n--- Done ---")


if __name__ == "__main__":
    main()
