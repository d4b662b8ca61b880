"""Regenerate src/ngmc/data/mcs_table2.json.

Spectral efficiencies are TS 38.214 Table 5.1.3.1-2 (Qm * R / 1024).
SINR lower bounds come from a Shannon-gap surrogate,
    sinr_min = 10 log10(2 ** (SE / ALPHA) - 1) + GAP_DB,
rounded to 0.01 dB; each interval ends where the next one starts and the
last interval repeats the width of the one before it.
"""

import json
import math
from pathlib import Path

ALPHA = 0.81
GAP_DB = 3.35

QM = [2, 2, 2, 2, 2, 4, 4, 4, 4, 4, 4, 6, 6, 6, 6, 6, 6, 6, 6, 6, 8, 8, 8, 8, 8, 8, 8, 8]
R1024 = [120, 193, 308, 449, 602, 378, 434, 490, 553, 616, 658, 466, 517, 567, 616, 666,
         719, 772, 822, 873, 682.5, 711, 754, 797, 841, 885, 916.5, 948]


def main():
    se = [q * r / 1024 for q, r in zip(QM, R1024)]
    lo = [round(10 * math.log10(2 ** (s / ALPHA) - 1) + GAP_DB, 2) for s in se]
    hi = lo[1:] + [round(lo[-1] + (lo[-1] - lo[-2]), 2)]
    table = {
        "schema": "ngmc.mcs_table",
        "version": 1,
        "source": (
            "SE: 3GPP TS 38.214 Table 5.1.3.1-2; SINR intervals: Shannon-gap surrogate "
            f"(alpha={ALPHA}, gap={GAP_DB} dB), not measured EESM data"
        ),
        "entries": [
            {"index": k, "sinr_min_db": lo[k], "sinr_max_db": hi[k], "spectral_efficiency": se[k]}
            for k in range(28)
        ],
    }
    out = Path(__file__).resolve().parents[1] / "src" / "ngmc" / "data" / "mcs_table2.json"
    out.write_text(json.dumps(table, indent=2) + "\n")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
