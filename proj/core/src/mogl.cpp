#include "metanav/mogl.hpp"

#include <cmath>
#include <stdexcept>

namespace metanav {

void add_mogl_params(ParamStore& store, std::size_t d_f, std::size_t d_out, Rng& rng) {
  store.add_uniform(kMoglW, ParamGroup::beta, d_f, d_out, d_f, rng);
}

void CovisibilityLog::add_edge(std::size_t i, std::size_t j) {
  if (i > known_ || j > known_) throw std::out_of_range("graph node index");
  if (i == j) return;
  edges_.insert({std::min(i, j), std::max(i, j)});
}

bool CovisibilityLog::has_edge(std::size_t i, std::size_t j) const {
  return i == j || edges_.contains({std::min(i, j), std::max(i, j)});
}

void CovisibilityLog::record(const ObservationFrame& frame, const std::vector<Detection>& detections,
                             bool cls, const ClassSplit& split) {
  for (std::size_t a = 0; a < detections.size(); ++a) {
    const VisibleObject* oa = frame.find_instance(detections[a].instance_id);
    for (std::size_t b = a + 1; b < detections.size(); ++b) {
      const VisibleObject* ob = frame.find_instance(detections[b].instance_id);
      const double dx = oa->pos.x - ob->pos.x, dy = oa->pos.y - ob->pos.y;
      if (std::sqrt(dx * dx + dy * dy) <= kCovisibleRadius) {
        add_edge(split.known_index(detections[a].class_id), split.known_index(detections[b].class_id));
      }
    }
    if (cls) add_edge(split.known_index(detections[a].class_id), known_);
  }
}

Matrix row_normalize(const Matrix& adjacency) {
  Matrix e = adjacency;
  for (std::size_t r = 0; r < e.rows(); ++r) {
    double s = 0.0;
    for (double v : e.row(r)) s += v;
    if (s == 0.0) throw std::invalid_argument("graph row without self-loop");
    for (double& v : e.row(r)) v /= s;
  }
  return e;
}

ObjectGraph build_graph(const ClassFeatureBuffer& buffer, const Matrix& f_t_prime,
                        const CovisibilityLog& log) {
  const std::size_t n = buffer.size() + 1, d = buffer.feature_dim();
  if (log.node_count() != n) throw DimensionError("co-visibility log and buffer disagree");
  if (f_t_prime.rows() != 1 || f_t_prime.cols() != d) throw DimensionError("f_t' shape");
  ObjectGraph g{Matrix(n, d), Matrix::identity(n), Matrix()};
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    if (!buffer.has(i)) continue;
    std::copy(buffer.mean(i).values().begin(), buffer.mean(i).values().end(), g.V.row(i).begin());
  }
  std::copy(f_t_prime.values().begin(), f_t_prime.values().end(), g.V.row(n - 1).begin());
  for (const auto& [i, j] : log.edges()) {
    g.adjacency(i, j) = 1.0;
    g.adjacency(j, i) = 1.0;
  }
  g.E = row_normalize(g.adjacency);
  return g;
}

Matrix gcn_forward(const ObjectGraph& g, const Matrix& w_g) { return relu(matmul(matmul(g.E, g.V), w_g)); }

Var gcn_forward(Tape& tape, const ObjectGraph& g, Var w_g) {
  return ad::relu(ad::matmul(tape.constant(matmul(g.E, g.V)), w_g));
}

ObjectGraph augment_once(const ObjectGraph& g, const AugmentationSpec& spec, Rng& rng) {
  if (spec.edge_drop < 0.0 || spec.edge_drop > 1.0 || spec.feature_mask < 0.0 ||
      spec.feature_mask > 1.0) {
    throw std::invalid_argument("augmentation probabilities must lie in [0, 1]");
  }
  ObjectGraph out = g;
  const std::size_t n = g.adjacency.rows();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      if (g.adjacency(i, j) == 0.0) continue;
      if (rng.bernoulli(spec.edge_drop)) {
        out.adjacency(i, j) = 0.0;
        out.adjacency(j, i) = 0.0;
      }
    }
  for (std::size_t c = 0; c < g.V.cols(); ++c) {
    if (!rng.bernoulli(spec.feature_mask)) continue;
    for (std::size_t r = 0; r < g.V.rows(); ++r) out.V(r, c) = 0.0;
  }
  out.E = row_normalize(out.adjacency);
  return out;
}

std::pair<ObjectGraph, ObjectGraph> augment(const ObjectGraph& g, const AugmentationSpec& spec, Rng& rng) {
  ObjectGraph a = augment_once(g, spec, rng);
  ObjectGraph b = augment_once(g, spec, rng);
  return {std::move(a), std::move(b)};
}

Var loss_cca(Var f_a, Var f_b, double eta) {
  Tape& tape = *f_a.tape();
  const Var eye = tape.constant(Matrix::identity(f_a.cols()));
  Var invariance = ad::sum_squares(ad::sub(f_a, f_b));
  Var dec_a = ad::sum_squares(ad::sub(ad::matmul(ad::transpose(f_a), f_a), eye));
  Var dec_b = ad::sum_squares(ad::sub(ad::matmul(ad::transpose(f_b), f_b), eye));
  return ad::add(invariance, ad::scale(ad::add(dec_a, dec_b), eta));
}

double loss_cca(const Matrix& f_a, const Matrix& f_b, double eta) {
  Tape tape;
  return loss_cca(tape.constant(f_a), tape.constant(f_b), eta).scalar();
}

Var mogl_view_loss(Tape& tape, const ObjectGraph& a, const ObjectGraph& b, Var w_g, double eta) {
  Var fa = ad::standardize_cols(gcn_forward(tape, a, w_g));
  Var fb = ad::standardize_cols(gcn_forward(tape, b, w_g));
  return loss_cca(fa, fb, eta);
}

MoglUpdate mogl_inner_update(ParamStore& beta_i, const ObjectGraph& g, const AugmentationSpec& spec,
                             Rng& rng, double eta, double lr) {
  const auto [a, b] = augment(g, spec, rng);
  Tape tape;
  Var w = tape.param(kMoglW, beta_i.get(kMoglW));
  Var loss = mogl_view_loss(tape, a, b, w, eta);
  tape.backward(loss);
  const Matrix grad = tape.grad(w);
  Matrix& wv = beta_i.get(kMoglW);
  for (std::size_t k = 0; k < wv.size(); ++k) wv[k] -= lr * grad[k];
  const double n = static_cast<double>(g.adjacency.rows());
  return {loss.scalar(), sum(g.adjacency) / (n * n)};
}

}  // namespace metanav
