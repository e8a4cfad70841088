#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qdens/errors.hpp"
#include "qdens/normal.hpp"

// Two-terminal stochastic network models: the built-in 8-node, 11-arc
// directed network with independent normal arc values, evaluated either as
// a shortest source-to-sink path length or as a maximum flow (whose value
// equals the capacity of the cheapest minimal directed cut).  The generic
// Network constructor exists for tests; the bundled estimator formulas are
// specific to the built-in instance.

namespace qdens {

enum class ModelKind { shortest_path, max_flow };

inline const char* model_name(ModelKind kind) {
  return kind == ModelKind::shortest_path ? "shortest-path" : "max-flow";
}

struct Arc {
  int tail = 0;
  int head = 0;
};

// A source-sink disconnecting arc set with no removable arc.  The
// exactly_once flag marks cuts crossed exactly once by every source-sink
// path; only those admit the conditional (cut-hiding) density estimator.
struct CutSet {
  std::vector<int> arcs;  // ascending arc indices
  std::uint32_t mask = 0;
  bool exactly_once = false;
};

class Network {
 public:
  Network(int node_count, std::vector<Arc> arcs, int source, int sink)
      : node_count_(node_count),
        arcs_(std::move(arcs)),
        source_(source),
        sink_(sink) {
    if (arcs_.size() > 31)
      throw std::invalid_argument("Network: at most 31 arcs supported");
    for (const Arc& a : arcs_)
      if (a.tail < 0 || a.head < 0 || a.tail >= node_count_ ||
          a.head >= node_count_)
        throw std::invalid_argument("Network: arc endpoint out of range");
    topo_sort();
    build_adjacency();
    enumerate_paths();
    enumerate_cuts();
  }

  // The 11-arc network: nodes 0..7, source 0, sink 7.  Arc j runs
  //   0: 0->1   1: 0->2   2: 0->3   3: 1->4   4: 2->4   5: 2->5
  //   6: 3->5   7: 4->6   8: 5->6   9: 4->7  10: 6->7
  static const Network& builtin() {
    static const Network net(8,
                             {{0, 1},
                              {0, 2},
                              {0, 3},
                              {1, 4},
                              {2, 4},
                              {2, 5},
                              {3, 5},
                              {4, 6},
                              {5, 6},
                              {4, 7},
                              {6, 7}},
                             0, 7);
    return net;
  }

  int node_count() const { return node_count_; }
  int arc_count() const { return static_cast<int>(arcs_.size()); }
  int source() const { return source_; }
  int sink() const { return sink_; }
  const std::vector<Arc>& arcs() const { return arcs_; }

  // All source-sink paths, each an ascending list of arc indices.
  const std::vector<std::vector<int>>& paths() const { return paths_; }

  // All minimal directed source-sink cuts (no arc removable), sorted by
  // size then lexicographically.
  const std::vector<CutSet>& minimal_cuts() const { return cuts_; }

  // Looks up a cut by its arc set; throws if the set is not a minimal cut.
  const CutSet& cut_by_arcs(std::span<const int> arc_indices) const {
    std::uint32_t mask = 0;
    for (int a : arc_indices) mask |= 1u << a;
    for (const CutSet& cut : cuts_)
      if (cut.mask == mask) return cut;
    throw std::invalid_argument("cut_by_arcs: not a minimal directed cut");
  }

  // Shortest source-sink path length by forward recursion over the
  // topological order.
  double shortest_path_value(std::span<const double> y) const {
    std::array<double, 32> dist;
    forward_distances(y, 0u, dist.data());
    return dist[static_cast<std::size_t>(sink_)];
  }

  // The same value as a minimum over enumerated path sums; kept as the
  // alternate route for cross-checking.
  double shortest_path_value_by_paths(std::span<const double> y) const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& path : paths_) {
      double len = 0.0;
      for (int a : path) len += y[static_cast<std::size_t>(a)];
      best = std::min(best, len);
    }
    return best;
  }

  // For each arc j of the cut, the length P_j of the shortest source-sink
  // route through arc j not counting Y_j itself, i.e. the shortest
  // source->tail(j) plus head(j)->sink distances over non-cut arcs only.
  // Output is aligned with cut.arcs.  Requires an exactly-once cut.
  std::vector<double> cut_offsets(std::span<const double> y,
                                  const CutSet& cut) const {
    if (!cut.exactly_once)
      throw std::invalid_argument(
          "cut_offsets: cut is crossed more than once by some path");
    std::array<double, 32> ds, dt;
    forward_distances(y, cut.mask, ds.data());
    backward_distances(y, cut.mask, dt.data());
    std::vector<double> out;
    out.reserve(cut.arcs.size());
    for (int a : cut.arcs) {
      const Arc& arc = arcs_[static_cast<std::size_t>(a)];
      const double p = ds[static_cast<std::size_t>(arc.tail)] +
                       dt[static_cast<std::size_t>(arc.head)];
      if (!std::isfinite(p))
        throw NumericalError("cut_offsets: cut arc unreachable without cut");
      out.push_back(p);
    }
    return out;
  }

  // Same, writing into a caller buffer (hot path; no validation).
  void cut_offsets_into(std::span<const double> y, const CutSet& cut,
                        double* out) const {
    std::array<double, 32> ds, dt;
    forward_distances(y, cut.mask, ds.data());
    backward_distances(y, cut.mask, dt.data());
    for (std::size_t i = 0; i < cut.arcs.size(); ++i) {
      const Arc& arc = arcs_[static_cast<std::size_t>(cut.arcs[i])];
      out[i] = ds[static_cast<std::size_t>(arc.tail)] +
               dt[static_cast<std::size_t>(arc.head)];
    }
  }

  // Maximum flow value for the given capacities: negatives are clamped to
  // zero, then the minimum cut capacity over all minimal directed cuts.
  double max_flow_value(std::span<const double> y) const {
    double best = std::numeric_limits<double>::infinity();
    for (const CutSet& cut : cuts_) {
      double cap = 0.0;
      for (int a : cut.arcs) {
        const double c = y[static_cast<std::size_t>(a)];
        if (c > 0.0) cap += c;
      }
      best = std::min(best, cap);
    }
    return best;
  }

 private:
  void topo_sort() {
    std::vector<int> indeg(static_cast<std::size_t>(node_count_), 0);
    for (const Arc& a : arcs_) ++indeg[static_cast<std::size_t>(a.head)];
    std::vector<int> stack;
    for (int v = 0; v < node_count_; ++v)
      if (indeg[static_cast<std::size_t>(v)] == 0) stack.push_back(v);
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      topo_.push_back(v);
      for (std::size_t j = 0; j < arcs_.size(); ++j)
        if (arcs_[j].tail == v && --indeg[static_cast<std::size_t>(arcs_[j].head)] == 0)
          stack.push_back(arcs_[j].head);
    }
    if (topo_.size() != static_cast<std::size_t>(node_count_))
      throw std::invalid_argument("Network: graph has a directed cycle");
  }

  void enumerate_paths() {
    std::vector<int> arc_stack;
    dfs_paths(source_, arc_stack);
    std::sort(paths_.begin(), paths_.end());
    path_masks_.clear();
    for (const auto& p : paths_) {
      std::uint32_t m = 0;
      for (int a : p) m |= 1u << a;
      path_masks_.push_back(m);
    }
  }

  void dfs_paths(int node, std::vector<int>& arc_stack) {
    if (node == sink_) {
      std::vector<int> path = arc_stack;
      std::sort(path.begin(), path.end());
      paths_.push_back(std::move(path));
      return;
    }
    for (std::size_t j = 0; j < arcs_.size(); ++j) {
      if (arcs_[j].tail != node) continue;
      arc_stack.push_back(static_cast<int>(j));
      dfs_paths(arcs_[j].head, arc_stack);
      arc_stack.pop_back();
    }
  }

  // Brute force over arc subsets: a minimal cut hits every path and every
  // one of its arcs is the unique cut arc of some path.
  void enumerate_cuts() {
    const auto m = static_cast<std::uint32_t>(arcs_.size());
    for (std::uint32_t mask = 1; mask < (1u << m); ++mask) {
      bool hits_all = true;
      std::uint32_t needed = mask;
      bool once_all = true;
      for (std::uint32_t pm : path_masks_) {
        const std::uint32_t hit = pm & mask;
        if (hit == 0) {
          hits_all = false;
          break;
        }
        if (std::popcount(hit) == 1)
          needed &= ~hit;
        else
          once_all = false;
      }
      if (!hits_all || needed != 0) continue;
      CutSet cut;
      cut.mask = mask;
      cut.exactly_once = once_all;
      for (int a = 0; a < static_cast<int>(m); ++a)
        if (mask & (1u << a)) cut.arcs.push_back(a);
      cuts_.push_back(std::move(cut));
    }
    std::sort(cuts_.begin(), cuts_.end(), [](const CutSet& a, const CutSet& b) {
      return a.arcs.size() != b.arcs.size() ? a.arcs.size() < b.arcs.size()
                                            : a.arcs < b.arcs;
    });
  }

  // Arc indices grouped by tail (resp. head) in topological (resp. reverse
  // topological) node order, as offset + flat index arrays.
  void build_adjacency() {
    fwd_offsets_.assign(topo_.size() + 1, 0);
    bwd_offsets_.assign(topo_.size() + 1, 0);
    for (std::size_t t = 0; t < topo_.size(); ++t) {
      for (std::size_t j = 0; j < arcs_.size(); ++j)
        if (arcs_[j].tail == topo_[t]) fwd_arcs_.push_back(static_cast<int>(j));
      fwd_offsets_[t + 1] = fwd_arcs_.size();
      const int v = topo_[topo_.size() - 1 - t];
      for (std::size_t j = 0; j < arcs_.size(); ++j)
        if (arcs_[j].head == v) bwd_arcs_.push_back(static_cast<int>(j));
      bwd_offsets_[t + 1] = bwd_arcs_.size();
    }
  }

  void forward_distances(std::span<const double> y, std::uint32_t skip_mask,
                         double* dist) const {
    constexpr double inf = std::numeric_limits<double>::infinity();
    for (int v = 0; v < node_count_; ++v) dist[v] = inf;
    dist[static_cast<std::size_t>(source_)] = 0.0;
    for (std::size_t t = 0; t < topo_.size(); ++t) {
      const double dv = dist[static_cast<std::size_t>(topo_[t])];
      if (dv == inf) continue;
      for (std::size_t at = fwd_offsets_[t]; at < fwd_offsets_[t + 1]; ++at) {
        const int j = fwd_arcs_[at];
        if (skip_mask & (1u << j)) continue;
        double& dh = dist[static_cast<std::size_t>(
            arcs_[static_cast<std::size_t>(j)].head)];
        dh = std::min(dh, dv + y[static_cast<std::size_t>(j)]);
      }
    }
  }

  void backward_distances(std::span<const double> y, std::uint32_t skip_mask,
                          double* dist) const {
    constexpr double inf = std::numeric_limits<double>::infinity();
    for (int v = 0; v < node_count_; ++v) dist[v] = inf;
    dist[static_cast<std::size_t>(sink_)] = 0.0;
    for (std::size_t t = 0; t < topo_.size(); ++t) {
      for (std::size_t at = bwd_offsets_[t]; at < bwd_offsets_[t + 1]; ++at) {
        const int j = bwd_arcs_[at];
        if (skip_mask & (1u << j)) continue;
        const Arc& arc = arcs_[static_cast<std::size_t>(j)];
        const double dh = dist[static_cast<std::size_t>(arc.head)];
        if (dh == inf) continue;
        double& dtail = dist[static_cast<std::size_t>(arc.tail)];
        dtail = std::min(dtail, y[static_cast<std::size_t>(j)] + dh);
      }
    }
  }

  int node_count_;
  std::vector<Arc> arcs_;
  int source_;
  int sink_;
  std::vector<int> topo_;
  std::vector<std::vector<int>> paths_;
  std::vector<std::uint32_t> path_masks_;
  std::vector<CutSet> cuts_;
  std::vector<int> fwd_arcs_, bwd_arcs_;
  std::vector<std::size_t> fwd_offsets_, bwd_offsets_;
};

// A network plus the per-arc distributions and output map of one model.
class NetworkModel {
 public:
  explicit NetworkModel(ModelKind kind)
      : kind_(kind), net_(&Network::builtin()) {
    const int m = net_->arc_count();
    dists_.resize(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) {
      if (kind == ModelKind::shortest_path)
        dists_[static_cast<std::size_t>(j)] = {10.0 * (j + 1),
                                               static_cast<double>(j + 1)};
      else
        dists_[static_cast<std::size_t>(j)] =
            j < 9 ? NormalParams{10.0, 1.0} : NormalParams{20.0, 4.0};
    }
  }

  ModelKind kind() const { return kind_; }
  const Network& network() const { return *net_; }
  int dim() const { return net_->arc_count(); }
  const std::vector<NormalParams>& arc_dists() const { return dists_; }

  // Arc values by inversion: y_j = F_j^{-1}(u_j).
  void sample_arcs(std::span<const double> u, std::span<double> y) const {
    for (std::size_t j = 0; j < dists_.size(); ++j)
      y[j] = dists_[j].mu + dists_[j].sigma * detail::std_normal_quantile(u[j]);
  }

  std::vector<double> sample_arcs(std::span<const double> u) const {
    std::vector<double> y(dists_.size());
    sample_arcs(u, y);
    return y;
  }

  double output(std::span<const double> y) const {
    return kind_ == ModelKind::shortest_path ? net_->shortest_path_value(y)
                                             : net_->max_flow_value(y);
  }

  // The x-independent factor of the likelihood-ratio score
  // S(y, x) = lr_score_base(y) / x (same formula for both models).
  double lr_score_base(std::span<const double> y) const {
    double acc = 0.0;
    for (std::size_t j = 0; j < dists_.size(); ++j) {
      const NormalParams& p = dists_[j];
      acc += (y[j] - p.mu) * y[j] / (p.sigma * p.sigma);
    }
    return static_cast<double>(dists_.size()) - acc;
  }

 private:
  ModelKind kind_;
  const Network* net_;
  std::vector<NormalParams> dists_;
};

}  // namespace qdens
