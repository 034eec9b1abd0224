#include "ictxot/nonparametric.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ictxot {

namespace {

Dense make_dense(std::size_t in, std::size_t out, double gain, Stream& rng) {
  Dense d{Matrix(in, out), Matrix(1, out)};
  const double sd = std::sqrt(gain / static_cast<double>(in));
  for (double& v : d.weight.data()) v = sd * rng.normal();
  return d;
}

Attention make_attention(const CrossAttnConfig& c, Stream& rng) {
  Attention a;
  const double sd_in = std::sqrt(1.0 / static_cast<double>(c.hidden));
  const double sd_out = std::sqrt(1.0 / static_cast<double>(c.hidden));
  auto fill = [&](std::size_t r, std::size_t cols, double sd) {
    Matrix m(r, cols);
    for (double& v : m.data()) v = sd * rng.normal();
    return m;
  };
  for (std::size_t h = 0; h < c.heads; ++h) {
    a.query.push_back(fill(c.hidden, c.head_dim(), sd_in));
    a.key.push_back(fill(c.hidden, c.head_dim(), sd_in));
    a.value.push_back(fill(c.hidden, c.head_dim(), sd_in));
    a.output.push_back(fill(c.head_dim(), c.hidden, sd_out));
  }
  return a;
}

template <class W, class Fn>
void visit(W& w, Fn&& fn) {
  for (auto* d : {&w.source_in, &w.source_hidden, &w.target_in, &w.target_hidden}) {
    fn(d->weight);
    fn(d->bias);
  }
  for (auto* a : {&w.self_attention, &w.cross_attention}) {
    for (auto& m : a->query) fn(m);
    for (auto& m : a->key) fn(m);
    for (auto& m : a->value) fn(m);
    for (auto& m : a->output) fn(m);
  }
  for (auto* d : {&w.head_in, &w.head_out}) {
    fn(d->weight);
    fn(d->bias);
  }
}

// The same weights as tape variables, mirroring the struct layout.
struct DenseVars {
  ad::Var weight, bias;
};
struct AttentionVars {
  std::vector<ad::Var> query, key, value, output;
};
struct WeightVars {
  DenseVars source_in, source_hidden, target_in, target_hidden;
  AttentionVars self_attention, cross_attention;
  DenseVars head_in, head_out;
  std::vector<ad::Var> all;  // pack() order
};

WeightVars place(ad::Tape& tape, const NonparametricWeights& w, bool trainable) {
  WeightVars v;
  auto put = [&](const Matrix& m) {
    ad::Var x = trainable ? tape.leaf(m) : tape.constant(m);
    v.all.push_back(x);
    return x;
  };
  auto dense = [&](const Dense& d) { return DenseVars{put(d.weight), put(d.bias)}; };
  auto attention = [&](const Attention& a) {
    AttentionVars out;
    for (const auto& m : a.query) out.query.push_back(put(m));
    for (const auto& m : a.key) out.key.push_back(put(m));
    for (const auto& m : a.value) out.value.push_back(put(m));
    for (const auto& m : a.output) out.output.push_back(put(m));
    return out;
  };
  // Evaluation order matches visit().
  v.source_in = dense(w.source_in);
  v.source_hidden = dense(w.source_hidden);
  v.target_in = dense(w.target_in);
  v.target_hidden = dense(w.target_hidden);
  v.self_attention = attention(w.self_attention);
  v.cross_attention = attention(w.cross_attention);
  v.head_in = dense(w.head_in);
  v.head_out = dense(w.head_out);
  return v;
}

ad::Var apply(const DenseVars& d, ad::Var x) { return ad::add_row(ad::matmul(x, d.weight), d.bias); }

ad::Var mlp(const DenseVars& first, const DenseVars& second, ad::Var x) {
  return apply(second, ad::relu(apply(first, x)));
}

// Multi-head attention of `queries` over `context`. Scores are laid out
// keys × queries so the softmax normalizes each column.
ad::Var attend(const AttentionVars& a, ad::Var queries, ad::Var context, double inv_scale) {
  ad::Var total;
  for (std::size_t h = 0; h < a.query.size(); ++h) {
    const ad::Var q = ad::matmul(queries, a.query[h]);
    const ad::Var k = ad::matmul(context, a.key[h]);
    const ad::Var v = ad::matmul(context, a.value[h]);
    const ad::Var weights = ad::softmax_columns(ad::scale(ad::matmul_nt(k, q), inv_scale));
    const ad::Var head = ad::matmul(ad::matmul_tn(weights, v), a.output[h]);
    total = h == 0 ? head : ad::add(total, head);
  }
  return total;
}

ad::Var forward_graph(ad::Tape& tape, const WeightVars& w, const CrossAttnConfig& c, const Prompt& prompt,
                      const Matrix& queries) {
  const ad::Var src = tape.constant(prompt.source);
  const ad::Var tgt = tape.constant(prompt.target);
  const ad::Var x = tape.constant(queries);
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(c.head_dim()));

  ad::Var context = ad::concat_rows(mlp(w.source_in, w.source_hidden, src), mlp(w.target_in, w.target_hidden, tgt));
  context = ad::add(context, attend(w.self_attention, context, context, inv_scale));
  ad::Var tokens = mlp(w.source_in, w.source_hidden, x);
  tokens = ad::add(tokens, attend(w.cross_attention, tokens, context, inv_scale));
  return mlp(w.head_in, w.head_out, tokens);
}

void check_inputs(const NonparametricWeights& w, const Prompt& prompt, const Matrix& queries) {
  prompt.validate();
  const std::size_t d = w.config.dim;
  if (prompt.length() == 0) throw DimensionError("np_forward: empty prompt");
  if (prompt.source.cols() != d || queries.cols() != d) {
    throw DimensionError("np_forward: prompt " + prompt.source.shape_string() + " / queries " +
                         queries.shape_string() + " do not match model dim " + std::to_string(d));
  }
}

}  // namespace

void CrossAttnConfig::validate() const {
  if (dim == 0 || hidden == 0 || heads == 0 || prompt_length == 0) {
    throw std::invalid_argument("CrossAttnConfig: sizes must be positive");
  }
  if (hidden % heads != 0) {
    throw std::invalid_argument("CrossAttnConfig: hidden width " + std::to_string(hidden) +
                                " is not divisible by " + std::to_string(heads) + " heads");
  }
}

void NonparametricWeights::for_each(const std::function<void(Matrix&)>& fn) { visit(*this, fn); }

void NonparametricWeights::for_each(const std::function<void(const Matrix&)>& fn) const { visit(*this, fn); }

std::size_t NonparametricWeights::parameter_count() const {
  std::size_t n = 0;
  for_each([&](const Matrix& m) { n += m.size(); });
  return n;
}

NonparametricWeights NonparametricWeights::init(const CrossAttnConfig& config, Stream& rng) {
  config.validate();
  NonparametricWeights w;
  w.config = config;
  const std::size_t d = config.dim, h = config.hidden;
  w.source_in = make_dense(d, h, 2.0, rng);
  w.source_hidden = make_dense(h, h, 2.0, rng);
  w.target_in = make_dense(d, h, 2.0, rng);
  w.target_hidden = make_dense(h, h, 2.0, rng);
  w.self_attention = make_attention(config, rng);
  w.cross_attention = make_attention(config, rng);
  w.head_in = make_dense(h, h, 2.0, rng);
  w.head_out = make_dense(h, d, 2.0, rng);
  w.head_out.weight *= 0.1;
  return w;
}

std::vector<double> pack(const NonparametricWeights& w) {
  std::vector<double> flat;
  flat.reserve(w.parameter_count());
  w.for_each([&](const Matrix& m) { flat.insert(flat.end(), m.data().begin(), m.data().end()); });
  return flat;
}

NonparametricWeights unpack(const NonparametricWeights& like, std::span<const double> flat) {
  if (flat.size() != like.parameter_count()) {
    throw DimensionError("unpack: expected " + std::to_string(like.parameter_count()) + " values, got " +
                         std::to_string(flat.size()));
  }
  NonparametricWeights w = like;
  std::size_t at = 0;
  w.for_each([&](Matrix& m) {
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(at),
              flat.begin() + static_cast<std::ptrdiff_t>(at + m.size()), m.data().begin());
    at += m.size();
  });
  return w;
}

Matrix np_forward(const NonparametricWeights& w, const Prompt& prompt, const Matrix& queries) {
  check_inputs(w, prompt, queries);
  ad::Tape tape;
  const WeightVars vars = place(tape, w, false);
  return forward_graph(tape, vars, w.config, prompt, queries).value();
}

namespace {

struct LossGraph {
  ad::Var total, transport, mmd;
};

LossGraph loss_graph(ad::Tape& tape, const WeightVars& vars, const NonparametricWeights& w, const Prompt& prompt,
                     const Matrix& sources, const Matrix& targets, double lambda, const KernelSpec& kernel) {
  check_inputs(w, prompt, sources);
  if (sources.rows() != targets.rows() || sources.cols() != targets.cols()) {
    throw DimensionError("np_loss: sources " + sources.shape_string() + " vs targets " + targets.shape_string());
  }
  if (sources.rows() < 2) throw DimensionError("np_loss: MMD needs at least 2 training pairs");
  const ad::Var pred = forward_graph(tape, vars, w.config, prompt, sources);
  const ad::Var transport = ad::mean_sq_dist(pred, tape.constant(sources));
  const ad::Var mmd = ad::mmd2_u(pred, targets, kernel);
  return {ad::add(transport, ad::scale(mmd, lambda)), transport, mmd};
}

}  // namespace

NpLossTerms np_loss(const NonparametricWeights& w, const Prompt& prompt, const Matrix& sources,
                    const Matrix& targets, double lambda, const KernelSpec& kernel) {
  ad::Tape tape;
  const WeightVars vars = place(tape, w, false);
  const LossGraph g = loss_graph(tape, vars, w, prompt, sources, targets, lambda, kernel);
  return {g.total.scalar(), g.transport.scalar(), g.mmd.scalar()};
}

NpGradient np_loss_grad(const NonparametricWeights& w, const Prompt& prompt, const Matrix& sources,
                        const Matrix& targets, double lambda, const KernelSpec& kernel) {
  ad::Tape tape;
  const WeightVars vars = place(tape, w, true);
  const LossGraph g = loss_graph(tape, vars, w, prompt, sources, targets, lambda, kernel);
  tape.backward(g.total);
  NpGradient out;
  out.terms = {g.total.scalar(), g.transport.scalar(), g.mmd.scalar()};
  out.flat.reserve(w.parameter_count());
  for (const ad::Var& v : vars.all) out.flat.insert(out.flat.end(), v.grad().data().begin(), v.grad().data().end());
  out.relu_margin = tape.min_relu_margin();
  return out;
}

}  // namespace ictxot
