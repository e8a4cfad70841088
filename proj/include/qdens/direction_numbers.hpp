#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qdens/sobol_data.hpp"

namespace qdens {

// Initial direction numbers and primitive polynomials for a Sobol'
// sequence.  Dimension 1 is always the van der Corput recurrence in base 2
// and is not stored; record i describes dimension i+2.
//
// File format (whitespace separated, '#' comments): one row per dimension
//   d deg a m_1 ... m_deg
// where a holds the polynomial coefficient bits without the leading and
// trailing 1.  This matches the published Joe-Kuo table layout.
class DirectionNumbers {
 public:
  struct DimRecord {
    std::uint32_t degree = 0;
    std::uint32_t poly = 0;
    std::vector<std::uint32_t> m;
  };

  DirectionNumbers() = default;

  int max_dim() const { return static_cast<int>(records_.size()) + 1; }
  const DimRecord& record(int dim) const {  // dim >= 2
    return records_.at(static_cast<std::size_t>(dim) - 2);
  }

  // The bundled Joe-Kuo style table (64 dimensions).
  static const DirectionNumbers& builtin() {
    static const DirectionNumbers table = make_builtin();
    return table;
  }

  static DirectionNumbers parse(std::istream& in) {
    DirectionNumbers out;
    std::string line;
    int expected_dim = 2;
    while (std::getline(in, line)) {
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      std::istringstream row(line);
      long d = 0;
      if (!(row >> d)) continue;  // blank/comment line
      DimRecord rec;
      long deg = 0, a = 0;
      if (!(row >> deg >> a) || d != expected_dim || deg < 1 || deg > 18 ||
          a < 0)
        throw std::invalid_argument("direction-number table: bad row for d=" +
                                    std::to_string(d));
      rec.degree = static_cast<std::uint32_t>(deg);
      rec.poly = static_cast<std::uint32_t>(a);
      for (long i = 0; i < deg; ++i) {
        long m = 0;
        if (!(row >> m))
          throw std::invalid_argument(
              "direction-number table: missing m values for d=" +
              std::to_string(d));
        rec.m.push_back(static_cast<std::uint32_t>(m));
      }
      out.records_.push_back(std::move(rec));
      ++expected_dim;
    }
    if (out.records_.empty())
      throw std::invalid_argument("direction-number table: no rows");
    out.validate();
    return out;
  }

  static DirectionNumbers load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
      throw std::invalid_argument("cannot open direction-number file: " +
                                  path);
    return parse(in);
  }

  // Every m_i must be odd and < 2^i, which makes the generator matrices
  // upper triangular with unit diagonal (hence invertible).
  void validate() const {
    for (std::size_t r = 0; r < records_.size(); ++r) {
      const auto& rec = records_[r];
      if (rec.m.size() != rec.degree)
        throw std::invalid_argument("direction-number table: degree mismatch");
      for (std::size_t i = 0; i < rec.m.size(); ++i) {
        const std::uint32_t mi = rec.m[i];
        if (mi % 2 == 0 || mi >= (1u << (i + 1)))
          throw std::invalid_argument(
              "direction-number table: m_" + std::to_string(i + 1) +
              " out of range for d=" + std::to_string(r + 2));
      }
    }
  }

 private:
  static DirectionNumbers make_builtin() {
    DirectionNumbers out;
    out.records_.reserve(detail::kSobolTable.size());
    for (const auto& rec : detail::kSobolTable) {
      DimRecord dim;
      dim.degree = rec.degree;
      dim.poly = rec.poly;
      dim.m.assign(rec.m.begin(), rec.m.begin() + rec.degree);
      out.records_.push_back(std::move(dim));
    }
    out.validate();
    return out;
  }

  std::vector<DimRecord> records_;
};

}  // namespace qdens
