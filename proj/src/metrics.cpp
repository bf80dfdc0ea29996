#include "tokroute/metrics.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <utility>

namespace tokroute {
namespace {

struct Contingency {
  std::map<std::pair<std::uint32_t, std::uint32_t>, double> cells;
  std::map<std::uint32_t, double> rows;
  std::map<std::uint32_t, double> cols;
  double n = 0.0;
};

Contingency tabulate(std::span<const std::uint32_t> labels, std::span<const std::uint32_t> assignments) {
  if (labels.size() != assignments.size()) throw ShapeError("labels and assignments differ in length");
  Contingency t;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    t.cells[{labels[i], assignments[i]}] += 1.0;
    t.rows[labels[i]] += 1.0;
    t.cols[assignments[i]] += 1.0;
  }
  t.n = static_cast<double>(labels.size());
  return t;
}

double choose2(double x) { return x * (x - 1.0) / 2.0; }

double entropy_of(const std::map<std::uint32_t, double>& counts, double n) {
  double h = 0.0;
  for (const auto& [_, c] : counts) {
    const double p = c / n;
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

}  // namespace

double ari(std::span<const std::uint32_t> labels, std::span<const std::uint32_t> assignments) {
  const Contingency t = tabulate(labels, assignments);
  if (t.n < 2.0) return 1.0;
  double index = 0.0;
  for (const auto& [_, c] : t.cells) index += choose2(c);
  double sum_rows = 0.0;
  for (const auto& [_, c] : t.rows) sum_rows += choose2(c);
  double sum_cols = 0.0;
  for (const auto& [_, c] : t.cols) sum_cols += choose2(c);
  const double expected = sum_rows * sum_cols / choose2(t.n);
  const double max_index = 0.5 * (sum_rows + sum_cols);
  const double denom = max_index - expected;
  if (denom == 0.0) return 1.0;
  return (index - expected) / denom;
}

double nmi(std::span<const std::uint32_t> labels, std::span<const std::uint32_t> assignments) {
  const Contingency t = tabulate(labels, assignments);
  if (t.n == 0.0) return 1.0;
  const double hu = entropy_of(t.rows, t.n);
  const double hv = entropy_of(t.cols, t.n);
  if (hu == 0.0 && hv == 0.0) return 1.0;
  double mi = 0.0;
  for (const auto& [key, c] : t.cells) {
    const double pij = c / t.n;
    const double pi = t.rows.at(key.first) / t.n;
    const double pj = t.cols.at(key.second) / t.n;
    mi += pij * std::log(pij / (pi * pj));
  }
  const double denom = 0.5 * (hu + hv);
  return std::clamp(mi / denom, 0.0, 1.0);
}

double routing_entropy(const MatrixD& probs) {
  double total = 0.0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    double h = 0.0;
    for (double p : probs.row(i)) {
      if (p > 0.0) h -= p * std::log(p);
    }
    total += h;
  }
  return total / static_cast<double>(probs.rows());
}

MatrixD confusion(std::span<const std::uint32_t> labels, std::span<const std::uint32_t> assignments,
                  std::size_t num_classes, std::size_t num_clusters) {
  if (labels.size() != assignments.size()) throw ShapeError("labels and assignments differ in length");
  MatrixD m(num_classes, num_clusters);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes || assignments[i] >= num_clusters) throw IndexError("confusion: id out of range");
    m(labels[i], assignments[i]) += 1.0;
  }
  for (std::size_t r = 0; r < num_classes; ++r) {
    double total = 0.0;
    for (double v : m.row(r)) total += v;
    if (total > 0.0) {
      for (double& v : m.row(r)) v /= total;
    }
  }
  return m;
}

}  // namespace tokroute
