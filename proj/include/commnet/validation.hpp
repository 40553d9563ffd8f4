#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "commnet/core.hpp"

namespace commnet {

/// Folds a generated n x N_TOT matrix into the (n+1) x (n+1) comparison
/// table. Flows to the m surrounding units collapse into the "Out."
/// column; the "Out." row is the inbound capacity left unconsumed by the
/// residence rows, attributed to outside residents.
inline FlowMatrix build_comparison_table(const FlowMatrix& w,
                                         const std::vector<std::int64_t>& s_in,
                                         const std::vector<std::int64_t>& s_out) {
  const std::size_t n = w.flows.rows();
  const std::size_t n_tot = w.flows.cols();
  if (n_tot < n || s_in.size() != n_tot || s_out.size() != n)
    throw input_error("comparison table: margin lengths do not match W");

  FlowMatrix table;
  table.shape = FlowShape::comparison;
  table.flows = Matrix<std::int64_t>(n + 1, n + 1);
  table.row_labels.assign(w.row_labels.begin(), w.row_labels.end());
  table.row_labels.push_back("Out.");
  table.col_labels = table.row_labels;

  for (std::size_t r = 0; r < n; ++r) {
    std::int64_t out_col = 0;
    for (std::size_t c = 0; c < n_tot; ++c) {
      if (c < n)
        table.flows(r, c) = w.flows(r, c);
      else
        out_col += w.flows(r, c);
    }
    table.flows(r, n) = out_col;
  }
  for (std::size_t c = 0; c < n_tot; ++c) {
    std::int64_t consumed = 0;
    for (std::size_t r = 0; r < n; ++r) consumed += w.flows(r, c);
    const std::int64_t remaining = s_in[c] - consumed;
    if (remaining < 0)
      throw data_error("column consumption exceeds s_in for unit '" +
                       w.col_labels[c] + "' (" + std::to_string(consumed) +
                       " > " + std::to_string(s_in[c]) + ")");
    if (c < n) table.flows(n, c) = remaining;
  }
  table.flows(n, n) = 0;
  return table;
}

inline void check_same_shape(const FlowMatrix& y, const FlowMatrix& yt) {
  if (y.flows.rows() != yt.flows.rows() || y.flows.cols() != yt.flows.cols())
    throw input_error("flow matrices have different shapes");
}

/// Number of common commuters: sum of entrywise minima.
inline std::int64_t ncc(const FlowMatrix& y, const FlowMatrix& yt) {
  check_same_shape(y, yt);
  std::int64_t total = 0;
  for (std::size_t k = 0; k < y.flows.data().size(); ++k)
    total += std::min(y.flows.data()[k], yt.flows.data()[k]);
  return total;
}

inline std::int64_t nc(const FlowMatrix& y) { return y.total(); }

/// Common part of commuters, the Sorensen index of the two flow
/// multisets: 2 NCC / (NC(Y) + NC(Yt)), in [0, 1].
inline double cpc(const FlowMatrix& y, const FlowMatrix& yt) {
  check_same_shape(y, yt);
  const std::int64_t denom = nc(y) + nc(yt);
  if (denom <= 0) throw input_error("cpc: both matrices are empty");
  return 2.0 * static_cast<double>(ncc(y, yt)) / static_cast<double>(denom);
}

}  // namespace commnet
