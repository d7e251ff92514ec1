#include "auditalloc/score_vector.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include "auditalloc/csv.hpp"

namespace auditalloc {

void ScoreVector::validate() const {
  if (ids.size() != scores.size()) throw DataError("ScoreVector: ids and scores differ in length");
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (!std::isfinite(scores[i]))
      throw DataError("ScoreVector: non-finite score for id " + std::to_string(ids[i]));
}

void ScoreVector::require_aligned(const Population& pop) const {
  if (scores.size() != pop.size() || ids.size() != pop.size())
    throw DimensionError("scores have " + std::to_string(scores.size()) +
                         " entries, population has " + std::to_string(pop.size()));
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] != pop[i].id)
      throw DimensionError("score id " + std::to_string(ids[i]) + " at position " +
                           std::to_string(i) + " does not match population id " +
                           std::to_string(pop[i].id));
}

void write_scores(const ScoreVector& s, std::ostream& out) {
  out << "id,score\n";
  for (std::size_t i = 0; i < s.size(); ++i)
    out << s.ids[i] << ',' << csv::format_double(s.scores[i]) << '\n';
}

ScoreVector read_scores(std::istream& in) {
  const auto t = csv::read_table(in);
  ScoreVector s;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    s.ids.push_back(static_cast<std::int64_t>(t.number(r, "id")));
    s.scores.push_back(t.number(r, "score"));
  }
  return s;
}

}  // namespace auditalloc
