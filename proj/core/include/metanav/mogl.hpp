#pragma once

// Object-graph learner: proximity graph over known classes plus the
// unlabeled node, a one-layer GCN and the CCA-style self-supervised loss.

#include <set>
#include <utility>
#include <vector>

#include "metanav/gridworld.hpp"
#include "metanav/matrix.hpp"
#include "metanav/mcfm.hpp"
#include "metanav/param_store.hpp"
#include "metanav/perception.hpp"
#include "metanav/tape.hpp"

namespace metanav {

inline constexpr const char* kMoglW = "mogl.w_g";
inline constexpr double kCovisibleRadius = 3.0;

/// Adds W_G (D_f x d_out) to the beta group.
void add_mogl_params(ParamStore& store, std::size_t d_f, std::size_t d_out, Rng& rng);

/// Edges seen so far in an episode. Node I (== known count) is the
/// unlabeled node; it links to every known class detected on a CLS = 1 step.
class CovisibilityLog {
 public:
  explicit CovisibilityLog(std::size_t known_classes) : known_(known_classes) {}

  void record(const ObservationFrame& frame, const std::vector<Detection>& detections, bool cls,
              const ClassSplit& split);
  void add_edge(std::size_t i, std::size_t j);
  bool has_edge(std::size_t i, std::size_t j) const;
  void reset() { edges_.clear(); }
  std::size_t node_count() const { return known_ + 1; }
  const std::set<std::pair<std::size_t, std::size_t>>& edges() const { return edges_; }

 private:
  std::size_t known_;
  std::set<std::pair<std::size_t, std::size_t>> edges_;  // i < j
};

struct ObjectGraph {
  Matrix V;          ///< (I+1) x D_f
  Matrix adjacency;  ///< 0/1 with self-loops
  Matrix E;          ///< row-normalised adjacency
};

Matrix row_normalize(const Matrix& adjacency);

/// Rows 0..I-1 are buffer means (zero when never observed), row I is f_t'.
ObjectGraph build_graph(const ClassFeatureBuffer& buffer, const Matrix& f_t_prime,
                        const CovisibilityLog& log);

/// relu(E V W_G).
Matrix gcn_forward(const ObjectGraph& g, const Matrix& w_g);
Var gcn_forward(Tape& tape, const ObjectGraph& g, Var w_g);

struct AugmentationSpec {
  double edge_drop = 0.2;
  double feature_mask = 0.2;
};

/// Drops each non-self-loop edge (symmetrically) with probability edge_drop
/// and zeroes each feature column with probability feature_mask.
ObjectGraph augment_once(const ObjectGraph& g, const AugmentationSpec& spec, Rng& rng);
std::pair<ObjectGraph, ObjectGraph> augment(const ObjectGraph& g, const AugmentationSpec& spec, Rng& rng);

/// ||F_A - F_B||^2 + eta (||F_A^T F_A - I||^2 + ||F_B^T F_B - I||^2), applied
/// to the inputs as given.
Var loss_cca(Var f_a, Var f_b, double eta);
double loss_cca(const Matrix& f_a, const Matrix& f_b, double eta);

/// Standardised views of one augmentation pair and their loss, on a tape.
Var mogl_view_loss(Tape& tape, const ObjectGraph& a, const ObjectGraph& b, Var w_g, double eta);

struct MoglUpdate {
  double loss = 0.0;  ///< before the step
  double density = 0.0;
};

/// One gradient step of L_cca on the task-local beta over a fresh
/// augmentation pair.
MoglUpdate mogl_inner_update(ParamStore& beta_i, const ObjectGraph& g, const AugmentationSpec& spec,
                             Rng& rng, double eta, double lr);

}  // namespace metanav
