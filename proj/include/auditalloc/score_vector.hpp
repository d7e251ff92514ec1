#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "auditalloc/population.hpp"

namespace auditalloc {

// One finite score per record, aligned with a Population by position.
struct ScoreVector {
  std::vector<std::int64_t> ids;
  std::vector<double> scores;

  std::size_t size() const noexcept { return scores.size(); }

  // Throws DataError on non-finite values or mismatched lengths.
  void validate() const;
  // Throws DimensionError unless ids match pop's ids position by position.
  void require_aligned(const Population& pop) const;
};

// CSV `id,score`.
void write_scores(const ScoreVector& s, std::ostream& out);
ScoreVector read_scores(std::istream& in);

}  // namespace auditalloc
