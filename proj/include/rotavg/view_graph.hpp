// Copyright 2026 The rotavg Authors
// SPDX-License-Identifier: Apache-2.0
//
// View graph data model, pose-graph text I/O, spanning tree and connectivity
// utilities, and assembly of the sparse block connection matrix.

#ifndef ROTAVG_VIEW_GRAPH_HPP
#define ROTAVG_VIEW_GRAPH_HPP

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rotavg/error.hpp"
#include "rotavg/so3.hpp"

namespace rotavg {

using NodeId = std::size_t;

/// Canonical undirected edge key, first < second.
struct EdgeKey {
  NodeId i = 0;
  NodeId j = 0;

  static EdgeKey make(NodeId a, NodeId b) {
    return a < b ? EdgeKey{a, b} : EdgeKey{b, a};
  }

  auto operator<=>(const EdgeKey&) const = default;
};

/// Relative rotation r_ij = R_j R_i^T between views i < j.
///
/// The quaternion is the stored representation; the matrix is derived from
/// it once so that serialization reproduces the input bits.
struct RelativeEdge {
  NodeId i = 0;
  NodeId j = 0;
  UnitQuaternion q;
  Rotation r_ij;
  std::uint64_t weight = 0;

  EdgeKey key() const { return {i, j}; }
};

/// Undirected graph over nodes [0, n) with at most one edge per node pair.
class ViewGraph {
 public:
  ViewGraph() = default;
  explicit ViewGraph(std::size_t n) : n_(n) {}

  std::size_t num_nodes() const { return n_; }
  std::size_t num_edges() const { return edges_.size(); }
  bool empty() const { return n_ == 0; }

  /// Grows the node range to at least `n`.
  void reserve_nodes(std::size_t n) { n_ = std::max(n_, n); }

  /// Adds r_ab (rotation taking frame a to frame b). Reversed pairs are
  /// stored as (b, a) with the transposed rotation. Throws on self loops,
  /// duplicates and out-of-range ids.
  void add_edge(NodeId a, NodeId b, const UnitQuaternion& q_ab,
                std::uint64_t weight) {
    if (a == b) throw InvalidArgument("self-loop on node " + std::to_string(a));
    if (a >= n_ || b >= n_) throw InvalidArgument("node id out of range");
    const UnitQuaternion q = (a < b ? q_ab : q_ab.conjugate()).canonical();
    const EdgeKey key = EdgeKey::make(a, b);
    RelativeEdge edge{key.i, key.j, q, q.to_rotation(), weight};
    if (!edges_.emplace(key, std::move(edge)).second) {
      throw InvalidArgument("duplicate edge (" + std::to_string(key.i) + ", " +
                            std::to_string(key.j) + ")");
    }
  }

  void add_edge(NodeId a, NodeId b, const Rotation& r_ab,
                std::uint64_t weight) {
    add_edge(a, b, UnitQuaternion::from_rotation(r_ab), weight);
  }

  bool has_edge(NodeId a, NodeId b) const {
    return a != b && edges_.count(EdgeKey::make(a, b)) > 0;
  }

  const RelativeEdge* find(const EdgeKey& key) const {
    auto it = edges_.find(key);
    return it == edges_.end() ? nullptr : &it->second;
  }

  /// r_ab oriented from a to b, if the edge exists.
  std::optional<Rotation> relative(NodeId a, NodeId b) const {
    const RelativeEdge* e = find(EdgeKey::make(a, b));
    if (e == nullptr) return std::nullopt;
    return a < b ? e->r_ij : e->r_ij.inverse();
  }

  /// Edges in ascending (i, j) order.
  const std::map<EdgeKey, RelativeEdge>& edges() const { return edges_; }

  std::vector<EdgeKey> edge_keys() const {
    std::vector<EdgeKey> keys;
    keys.reserve(edges_.size());
    for (const auto& [key, e] : edges_) keys.push_back(key);
    return keys;
  }

  /// Sorted neighbor lists.
  std::vector<std::vector<NodeId>> adjacency() const {
    std::vector<std::vector<NodeId>> adj(n_);
    for (const auto& [key, e] : edges_) {
      adj[key.i].push_back(key.j);
      adj[key.j].push_back(key.i);
    }
    for (auto& nbrs : adj) std::sort(nbrs.begin(), nbrs.end());
    return adj;
  }

  /// Subgraph on the same node range restricted to `keys`.
  ViewGraph subgraph(const std::vector<EdgeKey>& keys) const {
    ViewGraph out(n_);
    for (const EdgeKey& k : keys) {
      const RelativeEdge* e = find(k);
      if (e == nullptr) throw InvalidArgument("subgraph: unknown edge");
      out.edges_.emplace(k, *e);
    }
    return out;
  }

 private:
  std::size_t n_ = 0;
  std::map<EdgeKey, RelativeEdge> edges_;
};

// ---------------------------------------------------------------------------
// Text format
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && std::isspace(static_cast<unsigned char>(line[pos]))) ++pos;
    if (pos >= line.size()) break;
    std::size_t end = pos;
    while (end < line.size() && !std::isspace(static_cast<unsigned char>(line[end]))) ++end;
    out.push_back(line.substr(pos, end - pos));
    pos = end;
  }
  return out;
}

inline std::uint64_t parse_uint(std::string_view tok, std::size_t line,
                                const char* what) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw ParseError(line, std::string("invalid ") + what + " '" +
                               std::string(tok) + "'");
  }
  return v;
}

inline double parse_double(std::string_view tok, std::size_t line) {
  // std::from_chars for double is unavailable on older libstdc++.
  std::string s(tok);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ParseError(line, "invalid number '" + s + "'");
  }
  if (used != s.size() || !std::isfinite(v)) {
    throw ParseError(line, "invalid number '" + s + "'");
  }
  return v;
}

/// Accepts |q| within 1e-12 of 1 as is, renormalizes within 1e-6, rejects
/// anything else.
inline UnitQuaternion parse_quaternion(const std::vector<std::string_view>& t,
                                       std::size_t first, std::size_t line) {
  double c[4];
  for (int k = 0; k < 4; ++k) c[k] = parse_double(t[first + k], line);
  UnitQuaternion q{c[0], c[1], c[2], c[3]};
  const double n = q.norm();
  if (std::abs(n - 1.0) <= 1e-12) return q;
  if (std::abs(n - 1.0) <= 1e-6) return {c[0] / n, c[1] / n, c[2] / n, c[3] / n};
  throw ParseError(line, "quaternion is not unit norm (|q| = " +
                             std::to_string(n) + ")");
}

inline std::string_view strip_comment(std::string_view line) {
  auto hash = line.find('#');
  if (hash != std::string_view::npos) line = line.substr(0, hash);
  return line;
}

inline void write_quaternion(std::ostream& os, const UnitQuaternion& q) {
  os << q.w << ' ' << q.x << ' ' << q.y << ' ' << q.z;
}

}  // namespace detail

/// Reads `EDGE i j qw qx qy qz weight` records. The node count is one past
/// the largest id seen. Throws ParseError with the offending line number.
inline ViewGraph parse_graph(std::istream& in) {
  struct Pending {
    NodeId a, b;
    UnitQuaternion q;
    std::uint64_t w;
    std::size_t line;
  };
  std::vector<Pending> pending;
  std::size_t max_id = 0;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto toks = detail::split_ws(detail::strip_comment(raw));
    if (toks.empty()) continue;
    if (toks[0] != "EDGE") {
      throw ParseError(lineno, "unknown record '" + std::string(toks[0]) + "'");
    }
    if (toks.size() != 8) {
      throw ParseError(lineno, "EDGE expects 7 fields, got " +
                                   std::to_string(toks.size() - 1));
    }
    Pending p;
    p.a = detail::parse_uint(toks[1], lineno, "node id");
    p.b = detail::parse_uint(toks[2], lineno, "node id");
    if (p.a == p.b) throw ParseError(lineno, "self-loop on node " + std::to_string(p.a));
    p.q = detail::parse_quaternion(toks, 3, lineno);
    p.w = detail::parse_uint(toks[7], lineno, "weight");
    p.line = lineno;
    max_id = std::max({max_id, p.a, p.b});
    pending.push_back(p);
  }
  ViewGraph g(pending.empty() ? 0 : max_id + 1);
  for (const Pending& p : pending) {
    try {
      g.add_edge(p.a, p.b, p.q, p.w);
    } catch (const InvalidArgument& e) {
      throw ParseError(p.line, e.what());
    }
  }
  return g;
}

inline ViewGraph parse_graph(const std::string& text) {
  std::istringstream in(text);
  return parse_graph(in);
}

inline void write_graph(std::ostream& os, const ViewGraph& g) {
  const auto flags = os.flags();
  const auto prec = os.precision();
  os << "# rotavg view graph: " << g.num_nodes() << " nodes, " << g.num_edges()
     << " edges\n";
  os << std::setprecision(17);
  for (const auto& [key, e] : g.edges()) {
    os << "EDGE " << e.i << ' ' << e.j << ' ';
    detail::write_quaternion(os, e.q);
    os << ' ' << e.weight << '\n';
  }
  os.flags(flags);
  os.precision(prec);
}

inline std::string serialize_graph(const ViewGraph& g) {
  std::ostringstream os;
  write_graph(os, g);
  return os.str();
}

/// Absolute rotations keyed by node id (ids need not be contiguous).
using RotationMap = std::map<NodeId, Rotation>;

inline void write_rotations(std::ostream& os, const RotationMap& rotations) {
  const auto flags = os.flags();
  const auto prec = os.precision();
  os << "# rotavg absolute rotations: " << rotations.size() << '\n';
  os << std::setprecision(17);
  for (const auto& [id, r] : rotations) {
    os << "ROT " << id << ' ';
    detail::write_quaternion(os, UnitQuaternion::from_rotation(r));
    os << '\n';
  }
  os.flags(flags);
  os.precision(prec);
}

inline std::string serialize_rotations(const RotationMap& rotations) {
  std::ostringstream os;
  write_rotations(os, rotations);
  return os.str();
}

inline std::string serialize_rotations(const std::vector<Rotation>& rotations) {
  RotationMap m;
  for (std::size_t k = 0; k < rotations.size(); ++k) m.emplace(k, rotations[k]);
  return serialize_rotations(m);
}

/// Reads `ROT i qw qx qy qz` records; duplicate ids are an error.
inline RotationMap parse_rotations(std::istream& in) {
  RotationMap out;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto toks = detail::split_ws(detail::strip_comment(raw));
    if (toks.empty()) continue;
    if (toks[0] != "ROT") {
      throw ParseError(lineno, "unknown record '" + std::string(toks[0]) + "'");
    }
    if (toks.size() != 6) throw ParseError(lineno, "ROT expects 5 fields");
    const NodeId id = detail::parse_uint(toks[1], lineno, "node id");
    const UnitQuaternion q = detail::parse_quaternion(toks, 2, lineno);
    if (!out.emplace(id, q.to_rotation()).second) {
      throw ParseError(lineno, "duplicate rotation for node " + std::to_string(id));
    }
  }
  return out;
}

inline RotationMap parse_rotations(const std::string& text) {
  std::istringstream in(text);
  return parse_rotations(in);
}

// ---------------------------------------------------------------------------
// Graph algorithms
// ---------------------------------------------------------------------------

/// Disjoint-set forest with path halving and union by size.
class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n), size_(n, 1) {
    std::iota(parent_.begin(), parent_.end(), NodeId{0});
  }

  NodeId find(NodeId x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  bool unite(NodeId a, NodeId b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    return true;
  }

 private:
  std::vector<NodeId> parent_;
  std::vector<std::size_t> size_;
};

/// Kruskal on descending weight; equal weights resolved by ascending (i, j).
/// Returns a spanning forest (one tree per component), sorted by key.
inline std::vector<EdgeKey> maximum_spanning_tree(const ViewGraph& g) {
  if (g.empty()) throw InvalidArgument("maximum_spanning_tree: empty graph");
  std::vector<const RelativeEdge*> order;
  order.reserve(g.num_edges());
  for (const auto& [key, e] : g.edges()) order.push_back(&e);
  std::stable_sort(order.begin(), order.end(),
                   [](const RelativeEdge* a, const RelativeEdge* b) {
                     return a->weight > b->weight;
                   });
  UnionFind uf(g.num_nodes());
  std::vector<EdgeKey> tree;
  for (const RelativeEdge* e : order) {
    if (uf.unite(e->i, e->j)) tree.push_back(e->key());
  }
  std::sort(tree.begin(), tree.end());
  return tree;
}

/// Component label per node; labels are dense and ordered by smallest member.
inline std::vector<std::size_t> connected_components(const ViewGraph& g,
                                                     std::size_t* count = nullptr) {
  UnionFind uf(g.num_nodes());
  for (const auto& [key, e] : g.edges()) uf.unite(key.i, key.j);
  std::vector<std::size_t> label(g.num_nodes());
  std::map<NodeId, std::size_t> root_label;
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    auto [it, inserted] = root_label.emplace(uf.find(v), root_label.size());
    label[v] = it->second;
  }
  if (count != nullptr) *count = root_label.size();
  return label;
}

inline bool is_connected(const ViewGraph& g) {
  std::size_t count = 0;
  connected_components(g, &count);
  return count <= 1;
}

struct ComponentSubgraph {
  ViewGraph graph;
  /// old id -> new id; nullopt for dropped nodes.
  std::vector<std::optional<NodeId>> old_to_new;
  /// new id -> old id.
  std::vector<NodeId> new_to_old;
};

/// Largest component by node count; ties go to the component holding the
/// smallest node id. New ids preserve the relative order of old ids.
inline ComponentSubgraph largest_connected_component(const ViewGraph& g) {
  ComponentSubgraph out;
  out.old_to_new.assign(g.num_nodes(), std::nullopt);
  if (g.empty()) return out;
  std::size_t count = 0;
  const auto label = connected_components(g, &count);
  std::vector<std::size_t> sizes(count, 0);
  for (std::size_t l : label) ++sizes[l];
  const std::size_t best =
      static_cast<std::size_t>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    if (label[v] == best) {
      out.old_to_new[v] = out.new_to_old.size();
      out.new_to_old.push_back(v);
    }
  }
  out.graph = ViewGraph(out.new_to_old.size());
  for (const auto& [key, e] : g.edges()) {
    if (label[key.i] != best) continue;
    out.graph.add_edge(*out.old_to_new[key.i], *out.old_to_new[key.j], e.q,
                       e.weight);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Connection matrix
// ---------------------------------------------------------------------------

/// Sparse symmetric 3n x 3n block matrix with G_ij = r_ij^T and
/// G_ji = r_ij for each canonical edge (i, j); absent blocks are zero.
///
/// With the factor blocks Y_i = R_i^T of a consistent solution every
/// ordered edge contributes tr(Y_j^T Y_i G_ij) = 3.
class ConnectionMatrix {
 public:
  struct Neighbor {
    NodeId node;
    Mat3 out;  ///< G_{self,node}
    Mat3 in;   ///< G_{node,self} = out^T
  };

  ConnectionMatrix() = default;

  explicit ConnectionMatrix(const ViewGraph& g)
      : rows_(g.num_nodes()), num_edges_(g.num_edges()) {
    for (const auto& [key, e] : g.edges()) {
      const Mat3& r = e.r_ij.matrix();
      rows_[key.i].push_back({key.j, r.transpose(), r});
      rows_[key.j].push_back({key.i, r, r.transpose()});
    }
    for (auto& row : rows_) {
      std::sort(row.begin(), row.end(), [](const Neighbor& a, const Neighbor& b) {
        return a.node < b.node;
      });
    }
  }

  std::size_t num_nodes() const { return rows_.size(); }
  std::size_t num_edges() const { return num_edges_; }

  /// Nonzero blocks of block-row i, sorted by column.
  const std::vector<Neighbor>& row(NodeId i) const { return rows_[i]; }

  std::optional<Mat3> block(NodeId i, NodeId j) const {
    const auto& r = rows_[i];
    auto it = std::lower_bound(r.begin(), r.end(), j,
                               [](const Neighbor& n, NodeId v) { return n.node < v; });
    if (it == r.end() || it->node != j) return std::nullopt;
    return it->out;
  }

  Eigen::MatrixXd to_dense() const {
    const Eigen::Index n = static_cast<Eigen::Index>(rows_.size());
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(3 * n, 3 * n);
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      for (const Neighbor& nb : rows_[i]) {
        d.block<3, 3>(3 * static_cast<Eigen::Index>(i),
                      3 * static_cast<Eigen::Index>(nb.node)) = nb.out;
      }
    }
    return d;
  }

 private:
  std::vector<std::vector<Neighbor>> rows_;
  std::size_t num_edges_ = 0;
};

inline ConnectionMatrix assemble_connection_matrix(const ViewGraph& g) {
  return ConnectionMatrix(g);
}

}  // namespace rotavg

#endif  // ROTAVG_VIEW_GRAPH_HPP
