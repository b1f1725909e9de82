#pragma once

#include <optional>
#include <string>
#include <utility>

#include "bigraph/nn.hpp"
#include "bigraph/ops.hpp"

namespace bigraph {

// One direction of the bipartite reasoning block. The latent graph has
// n_nodes nodes defined by the projection of the *other* pose's code; each
// node carries a d_state-dimensional state reduced from the *own* pose's
// code. All five tensors are trainable; theta/phi_reduce/phi_back are 1x1
// filters without bias.
template <typename T>
struct BGRBranchParams {
  Tensor<T> theta;         // [n_nodes, C, 1, 1] projection from the other code
  Tensor<T> phi_reduce;    // [d_state, C, 1, 1] state reduction of the own code
  Tensor<T> adjacency;     // [n_nodes, n_nodes]
  Tensor<T> edge_weights;  // [d_state, d_state]
  Tensor<T> phi_back;      // [C, d_state, 1, 1] expansion back to C channels
  int64_t n_nodes = 0;
  int64_t d_state = 0;

  static BGRBranchParams create(Rng& rng, int64_t channels, int64_t n_nodes, int64_t d_state,
                                double gcn_init_std = 0.01) {
    BGRBranchParams b;
    b.theta = init::conv_filter<T>(rng, n_nodes, channels, 1, 1, channels);
    b.phi_reduce = init::conv_filter<T>(rng, d_state, channels, 1, 1, channels);
    b.adjacency = init::gaussian_matrix<T>(rng, n_nodes, n_nodes, gcn_init_std);
    b.edge_weights = init::gaussian_matrix<T>(rng, d_state, d_state, gcn_init_std);
    b.phi_back = init::conv_filter<T>(rng, channels, d_state, 1, 1, d_state);
    b.n_nodes = n_nodes;
    b.d_state = d_state;
    return b;
  }

  void collect(ParamMap<T>& pm, const std::string& prefix) const {
    pm.add(prefix + ".theta", theta);
    pm.add(prefix + ".phi_reduce", phi_reduce);
    pm.add(prefix + ".adjacency", adjacency);
    pm.add(prefix + ".edge_weights", edge_weights);
    pm.add(prefix + ".phi_back", phi_back);
  }
};

template <typename T>
struct BGRBlockParams {
  std::optional<BGRBranchParams<T>> b2a;  // updates the source shape code
  std::optional<BGRBranchParams<T>> a2b;  // updates the target shape code
  bool share_gcn = false;

  static BGRBlockParams create(Rng& rng, int64_t channels, int64_t n_nodes_b2a,
                               int64_t n_nodes_a2b, int64_t d_state, bool use_b2a, bool use_a2b,
                               bool share_gcn) {
    BGRBlockParams blk;
    blk.share_gcn = share_gcn;
    if (use_b2a) blk.b2a = BGRBranchParams<T>::create(rng, channels, n_nodes_b2a, d_state);
    if (use_a2b) blk.a2b = BGRBranchParams<T>::create(rng, channels, n_nodes_a2b, d_state);
    if (share_gcn && blk.b2a && blk.a2b) {
      BG_CHECK_CFG(n_nodes_b2a == n_nodes_a2b,
                   "bgr: shared GCN requires equal node counts, got " << n_nodes_b2a << " vs "
                                                                      << n_nodes_a2b);
      // tie the graph parameters: both branches reference one tensor pair
      blk.a2b->adjacency = blk.b2a->adjacency;
      blk.a2b->edge_weights = blk.b2a->edge_weights;
    }
    return blk;
  }

  void collect(ParamMap<T>& pm, const std::string& prefix) const {
    if (b2a) b2a->collect(pm, prefix + ".b2a");
    if (a2b) a2b->collect(pm, prefix + ".a2b");
  }
};

// Coordinate space -> bipartite-graph space. projection is the reshaped
// theta(target_feat), reused for the backward projection of the same pass;
// node_states = projection * reshape(phi(source_feat)).
template <typename T>
std::pair<Tensor<T>, Tensor<T>> project_to_graph(const Tensor<T>& source_feat,
                                                 const Tensor<T>& target_feat,
                                                 const BGRBranchParams<T>& branch) {
  BG_CHECK_DIM(source_feat.rank() == 4 && target_feat.rank() == 4 &&
                   source_feat.shape() == target_feat.shape(),
               "project_to_graph: feature shapes disagree: " << shape_str(source_feat.shape())
                                                             << " vs "
                                                             << shape_str(target_feat.shape()));
  int64_t b = source_feat.dim(0);
  int64_t loc = source_feat.dim(2) * source_feat.dim(3);
  auto projection = reshape(conv2d(target_feat, branch.theta), {b, branch.n_nodes, loc});
  auto reduced = reshape(conv2d(source_feat, branch.phi_reduce), {b, branch.d_state, loc});
  auto node_states = bmm(projection, reduced, false, true);  // [b, n_nodes, d_state]
  return {node_states, projection};
}

// Laplacian-smoothed graph convolution M = (I - A) V W per sample.
template <typename T>
Tensor<T> graph_reason(const Tensor<T>& node_states, const Tensor<T>& adjacency,
                       const Tensor<T>& edge_weights) {
  BG_CHECK_DIM(node_states.rank() == 3, "graph_reason: node states must be rank-3, got "
                                            << shape_str(node_states.shape()));
  int64_t b = node_states.dim(0), n = node_states.dim(1), d = node_states.dim(2);
  BG_CHECK_DIM(adjacency.rank() == 2 && adjacency.dim(0) == n && adjacency.dim(1) == n,
               "graph_reason: adjacency " << shape_str(adjacency.shape()) << " must be square of side "
                                          << n);
  BG_CHECK_DIM(edge_weights.rank() == 2 && edge_weights.dim(0) == d && edge_weights.dim(1) == d,
               "graph_reason: edge weights " << shape_str(edge_weights.shape())
                                             << " must be square of side " << d);
  auto lap = sub(Tensor<T>::identity_matrix(n), adjacency);
  auto smoothed = bmm(expand_batch(lap, b), node_states);          // [b,n,d]
  auto flat = reshape(smoothed, {b * n, d});
  return reshape(matmul(flat, edge_weights), {b, n, d});
}

// Bipartite-graph space -> coordinate space, plus the residual connection.
// Reuses the data-dependent projection of the forward pass; gradients flow
// through it.
template <typename T>
Tensor<T> project_back(const Tensor<T>& reasoned, const Tensor<T>& projection,
                       const Tensor<T>& residual_input, const BGRBranchParams<T>& branch) {
  int64_t b = residual_input.dim(0);
  int64_t h = residual_input.dim(2), w = residual_input.dim(3);
  BG_CHECK_DIM(projection.rank() == 3 && projection.dim(2) == h * w,
               "project_back: projection " << shape_str(projection.shape())
                                           << " does not cover " << h * w << " locations");
  auto spatial = bmm(reasoned, projection, true, false);  // [b, d_state, L]
  auto grid = reshape(spatial, {b, branch.d_state, h, w});
  return add(conv2d(grid, branch.phi_back), residual_input);
}

// Full block: the B2A branch updates the source code from the target code's
// projection; the A2B branch does the symmetric update. A disabled branch
// passes its code through unchanged.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> bgr_forward(const Tensor<T>& f_pa, const Tensor<T>& f_pb,
                                            const BGRBlockParams<T>& params) {
  BG_CHECK_DIM(f_pa.shape() == f_pb.shape(), "bgr_forward: shape codes disagree: "
                                                 << shape_str(f_pa.shape()) << " vs "
                                                 << shape_str(f_pb.shape()));
  Tensor<T> new_pa = f_pa;
  Tensor<T> new_pb = f_pb;
  if (params.b2a) {
    auto [v, proj] = project_to_graph(f_pa, f_pb, *params.b2a);
    auto m = graph_reason(v, params.b2a->adjacency, params.b2a->edge_weights);
    new_pa = project_back(m, proj, f_pa, *params.b2a);
  }
  if (params.a2b) {
    auto [v, proj] = project_to_graph(f_pb, f_pa, *params.a2b);
    auto m = graph_reason(v, params.a2b->adjacency, params.a2b->edge_weights);
    new_pb = project_back(m, proj, f_pb, *params.a2b);
  }
  return {new_pa, new_pb};
}

}  // namespace bigraph
