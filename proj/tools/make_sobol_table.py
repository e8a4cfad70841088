#!/usr/bin/env python3
"""Regenerate the bundled Sobol' direction-number table.

Extracts the first MAX_DIM dimensions of the Joe & Kuo (2008) "new"
direction numbers from scipy's bundled copy and writes them twice:

  data/sobol_direction_numbers.txt   plain-text table (one row per
                                     dimension >= 2: d deg a m_1..m_deg)
  include/qdens/sobol_data.hpp       the same numbers as constexpr arrays

Run from the repository root:  python3 tools/make_sobol_table.py
"""

import os

import numpy as np
import scipy.stats._sobol as _sobol

MAX_DIM = 64

HEADER_TMPL = """\
// Generated by tools/make_sobol_table.py -- do not edit by hand.
//
// Sobol' direction numbers for dimensions 2..{max_dim} (dimension 1 is the
// implicit van der Corput recurrence).  Values are the Joe & Kuo (2008)
// "new" primitive polynomials and initial direction numbers, as bundled
// with scipy.  Layout per dimension: degree, polynomial coefficient bits
// (excluding the leading and trailing 1), then degree initial values m_i.

#pragma once

#include <array>
#include <cstdint>

namespace qdens::detail {{

inline constexpr int kSobolTableMaxDim = {max_dim};

struct SobolDimRecord {{
  std::uint32_t degree;
  std::uint32_t poly;  // middle coefficient bits of the primitive polynomial
  std::array<std::uint32_t, 18> m;
}};

// Index 0 holds dimension 2; dimension 1 is generated in code.
inline constexpr std::array<SobolDimRecord, {nrec}> kSobolTable = {{{{
{rows}
}}}};

}}  // namespace qdens::detail
"""


def main() -> None:
    npz = np.load(
        os.path.join(os.path.dirname(_sobol.__file__), "_sobol_direction_numbers.npz")
    )
    vinit = npz["vinit"]
    poly = npz["poly"]

    txt_rows = []
    cpp_rows = []
    for d in range(2, MAX_DIM + 1):
        p = int(poly[d - 1])
        deg = p.bit_length() - 1
        # strip the leading x^deg term and the trailing +1
        a = (p ^ (1 << deg)) >> 1
        m = [int(x) for x in vinit[d - 1][:deg]]
        assert all(mi % 2 == 1 and mi < (1 << (i + 1)) for i, mi in enumerate(m)), d
        txt_rows.append(f"{d} {deg} {a} {' '.join(str(x) for x in m)}")
        mm = ", ".join(str(x) for x in m + [0] * (18 - len(m)))
        cpp_rows.append(f"    {{{deg}u, {a}u, {{{{{mm}}}}}}},")

    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    os.makedirs(os.path.join(root, "data"), exist_ok=True)
    txt_path = os.path.join(root, "data", "sobol_direction_numbers.txt")
    with open(txt_path, "w") as f:
        f.write("# Sobol' direction numbers, Joe & Kuo (2008) new-style table.\n")
        f.write("# One row per dimension d >= 2: d deg a m_1 ... m_deg\n")
        f.write("# (a = primitive polynomial coefficient bits without the\n")
        f.write("#  leading and trailing 1; dimension 1 is implicit.)\n")
        f.write("\n".join(txt_rows) + "\n")

    hpp_path = os.path.join(root, "include", "qdens", "sobol_data.hpp")
    os.makedirs(os.path.dirname(hpp_path), exist_ok=True)
    with open(hpp_path, "w") as f:
        f.write(
            HEADER_TMPL.format(
                max_dim=MAX_DIM, nrec=MAX_DIM - 1, rows="\n".join(cpp_rows)
            )
        )
    print(f"wrote {txt_path} and {hpp_path} ({MAX_DIM - 1} records)")


if __name__ == "__main__":
    main()
