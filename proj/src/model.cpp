#include "dcoef/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "dcoef/errors.hpp"

namespace dcoef {

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw FormatError("unknown activation '" + name + "' (expected relu or tanh)");
}

PassCounters& pass_counters() {
  thread_local PassCounters counters;
  return counters;
}

Mlp::Mlp(std::vector<std::size_t> layer_dims, Activation activation)
    : dims_(std::move(layer_dims)), activation_(activation) {
  if (dims_.size() < 2) throw DimensionError("Mlp: need at least input and output dims");
  for (std::size_t d : dims_) {
    if (d == 0) throw DimensionError("Mlp: layer dims must be positive");
  }
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    offsets_.push_back(total);
    total += dims_[l] * dims_[l + 1] + dims_[l + 1];
  }
  params_.assign(total, 0.0);
}

Mlp Mlp::initialized(std::vector<std::size_t> layer_dims, Activation activation,
                     std::uint64_t seed) {
  Mlp m(std::move(layer_dims), activation);
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    const std::size_t fan_in = m.dims_[l];
    const std::size_t fan_out = m.dims_[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    auto w = m.params_.begin() + static_cast<std::ptrdiff_t>(m.weight_offset(l));
    std::generate_n(w, fan_in * fan_out, [&] { return dist(rng); });
  }
  return m;
}

void Mlp::set_params(std::span<const double> p) {
  if (p.size() != params_.size()) {
    throw DimensionError("set_params: expected " + std::to_string(params_.size()) +
                         " values, got " + std::to_string(p.size()));
  }
  std::copy(p.begin(), p.end(), params_.begin());
}

Mlp Mlp::with_params(std::span<const double> p) const {
  Mlp out = *this;
  out.set_params(p);
  return out;
}

void Mlp::check_input(const Matrix& x) const {
  if (x.rows() > 0 && x.cols() != input_dim()) {
    throw DimensionError("Mlp: input " + x.shape_string() + " but model expects " +
                         std::to_string(input_dim()) + " features");
  }
}

ForwardCache Mlp::forward_cached(const Matrix& x) const {
  check_input(x);
  ForwardCache cache;
  cache.layer_inputs.reserve(num_layers());
  cache.layer_inputs.push_back(x.rows() == 0 ? Matrix(0, input_dim()) : x);
  pass_counters().forward_rows += x.rows();

  for (std::size_t l = 0; l < num_layers(); ++l) {
    const Matrix& a = cache.layer_inputs.back();
    const std::size_t fan_in = dims_[l];
    const std::size_t fan_out = dims_[l + 1];
    const double* w = params_.data() + weight_offset(l);
    const double* b = params_.data() + bias_offset(l);

    Matrix z(a.rows(), fan_out);
    for (std::size_t i = 0; i < a.rows(); ++i) {
      auto zrow = z.row(i);
      std::copy_n(b, fan_out, zrow.begin());
      auto arow = a.row(i);
      for (std::size_t k = 0; k < fan_in; ++k) {
        const double aik = arow[k];
        if (aik == 0.0) continue;
        const double* wk = w + k * fan_out;
        for (std::size_t j = 0; j < fan_out; ++j) zrow[j] += aik * wk[j];
      }
    }

    if (l + 1 == num_layers()) {
      for (std::size_t i = 0; i < z.rows(); ++i) softmax_inplace(z.row(i));
      cache.probs = std::move(z);
    } else {
      for (double& v : z.values()) v = activation_ == Activation::relu ? std::max(v, 0.0) : std::tanh(v);
      cache.layer_inputs.push_back(std::move(z));
    }
  }
  return cache;
}

Matrix Mlp::forward(const Matrix& x) const { return forward_cached(x).probs; }

// Error signal at the output of every layer, last layer first in index order
// (deltas[l] has shape rows x dims_[l + 1]).
std::vector<Matrix> Mlp::output_deltas(const ForwardCache& cache, const Matrix& dlogits) const {
  if (dlogits.rows() != cache.probs.rows() || dlogits.cols() != num_classes()) {
    throw DimensionError("backward: dlogits " + dlogits.shape_string() + " vs probs " +
                         cache.probs.shape_string());
  }
  pass_counters().backward_rows += dlogits.rows();
  std::vector<Matrix> deltas(num_layers());
  deltas.back() = dlogits;
  for (std::size_t l = num_layers() - 1; l > 0; --l) {
    const Matrix& upper = deltas[l];
    const Matrix& a = cache.layer_inputs[l];
    const std::size_t fan_in = dims_[l];
    const std::size_t fan_out = dims_[l + 1];
    const double* w = params_.data() + weight_offset(l);
    Matrix d(upper.rows(), fan_in);
    for (std::size_t i = 0; i < upper.rows(); ++i) {
      auto urow = upper.row(i);
      auto drow = d.row(i);
      auto arow = a.row(i);
      for (std::size_t k = 0; k < fan_in; ++k) {
        const double* wk = w + k * fan_out;
        double acc = 0.0;
        for (std::size_t j = 0; j < fan_out; ++j) acc += wk[j] * urow[j];
        const double deriv = activation_ == Activation::relu ? (arow[k] > 0.0 ? 1.0 : 0.0)
                                                             : 1.0 - arow[k] * arow[k];
        drow[k] = acc * deriv;
      }
    }
    deltas[l - 1] = std::move(d);
  }
  return deltas;
}

GradientVector Mlp::backward(const ForwardCache& cache, const Matrix& dlogits) const {
  const auto deltas = output_deltas(cache, dlogits);
  GradientVector grad(params_.size(), 0.0);
  for (std::size_t l = 0; l < num_layers(); ++l) {
    const Matrix& a = cache.layer_inputs[l];
    const Matrix& d = deltas[l];
    const std::size_t fan_in = dims_[l];
    const std::size_t fan_out = dims_[l + 1];
    double* gw = grad.data() + weight_offset(l);
    double* gb = grad.data() + bias_offset(l);
    for (std::size_t i = 0; i < d.rows(); ++i) {
      auto arow = a.row(i);
      auto drow = d.row(i);
      for (std::size_t k = 0; k < fan_in; ++k) {
        const double aik = arow[k];
        if (aik == 0.0) continue;
        double* gk = gw + k * fan_out;
        for (std::size_t j = 0; j < fan_out; ++j) gk[j] += aik * drow[j];
      }
      for (std::size_t j = 0; j < fan_out; ++j) gb[j] += drow[j];
    }
  }
  return grad;
}

std::vector<GradientVector> Mlp::backward_per_example(const ForwardCache& cache,
                                                      const Matrix& dlogits) const {
  const auto deltas = output_deltas(cache, dlogits);
  std::vector<GradientVector> grads(dlogits.rows(), GradientVector(params_.size(), 0.0));
  for (std::size_t i = 0; i < dlogits.rows(); ++i) {
    GradientVector& grad = grads[i];
    for (std::size_t l = 0; l < num_layers(); ++l) {
      auto arow = cache.layer_inputs[l].row(i);
      auto drow = deltas[l].row(i);
      const std::size_t fan_out = dims_[l + 1];
      double* gw = grad.data() + weight_offset(l);
      for (std::size_t k = 0; k < dims_[l]; ++k) {
        const double aik = arow[k];
        if (aik == 0.0) continue;
        double* gk = gw + k * fan_out;
        for (std::size_t j = 0; j < fan_out; ++j) gk[j] = aik * drow[j];
      }
      std::copy(drow.begin(), drow.end(), grad.begin() + static_cast<std::ptrdiff_t>(bias_offset(l)));
    }
  }
  return grads;
}

Matrix cross_entropy_logit_grad(const Matrix& probs, const Matrix& targets,
                                std::span<const double> weights) {
  if (probs.rows() != targets.rows() || probs.cols() != targets.cols()) {
    throw DimensionError("cross-entropy: predictions " + probs.shape_string() + " vs targets " +
                         targets.shape_string());
  }
  if (weights.size() != probs.rows()) {
    throw DimensionError("cross-entropy: " + std::to_string(weights.size()) + " weights for " +
                         std::to_string(probs.rows()) + " rows");
  }
  Matrix out(probs.rows(), probs.cols());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    auto t = targets.row(i);
    auto p = probs.row(i);
    double mass = 0.0;
    for (double v : t) mass += v;
    auto o = out.row(i);
    for (std::size_t c = 0; c < o.size(); ++c) o[c] = weights[i] * (p[c] * mass - t[c]);
  }
  return out;
}

GradientVector grad_weighted_loss(const Mlp& model, const Matrix& x, const Matrix& targets,
                                  std::span<const double> weights) {
  const auto cache = model.forward_cached(x);
  return model.backward(cache, cross_entropy_logit_grad(cache.probs, targets, weights));
}

std::vector<GradientVector> per_example_gradients(const Mlp& model, const Matrix& x,
                                                  const Matrix& targets) {
  const auto cache = model.forward_cached(x);
  const std::vector<double> ones(x.rows(), 1.0);
  return model.backward_per_example(cache, cross_entropy_logit_grad(cache.probs, targets, ones));
}

void sgd_momentum_step(Mlp& model, MomentumState& state, std::span<const double> g, double lr) {
  auto theta = model.params();
  if (g.size() != theta.size() || state.velocity.size() != theta.size()) {
    throw DimensionError("sgd_momentum_step: parameter, gradient and velocity lengths differ");
  }
  for (std::size_t i = 0; i < theta.size(); ++i) {
    state.velocity[i] = state.mu * state.velocity[i] + g[i];
    theta[i] -= lr * state.velocity[i];
  }
}

std::string checkpoint_text(const Mlp& model) {
  std::ostringstream out;
  out << "dcoef-mlp 1\n";
  out << "activation " << to_string(model.activation()) << "\n";
  out << "layers " << model.layer_dims().size();
  for (std::size_t d : model.layer_dims()) out << ' ' << d;
  out << "\nparams " << model.num_params() << "\n";
  char buf[64];
  for (double v : model.params()) {
    std::snprintf(buf, sizeof buf, "%.17g\n", v);
    out << buf;
  }
  return out.str();
}

Mlp parse_checkpoint(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  auto next = [&](const char* what) -> std::istringstream {
    if (!std::getline(in, line)) {
      throw FormatError("checkpoint: unexpected end of file, expected " + std::string(what));
    }
    ++line_no;
    return std::istringstream(line);
  };
  auto fail = [&](const std::string& msg) -> FormatError {
    return FormatError("checkpoint line " + std::to_string(line_no) + ": " + msg);
  };

  std::string key;
  int version = 0;
  if (!(next("header") >> key >> version) || key != "dcoef-mlp" || version != 1) {
    throw fail("not a dcoef-mlp v1 checkpoint");
  }
  std::string act_name;
  if (!(next("activation") >> key >> act_name) || key != "activation") throw fail("expected 'activation <name>'");
  Activation act = parse_activation(act_name);

  auto layers_line = next("layers");
  std::size_t n_dims = 0;
  if (!(layers_line >> key >> n_dims) || key != "layers" || n_dims < 2) throw fail("expected 'layers <n> <dims...>'");
  std::vector<std::size_t> dims(n_dims);
  for (auto& d : dims) {
    if (!(layers_line >> d) || d == 0) throw fail("bad layer dimension");
  }
  Mlp model(dims, act);

  std::size_t n_params = 0;
  if (!(next("params") >> key >> n_params) || key != "params") throw fail("expected 'params <count>'");
  if (n_params != model.num_params()) {
    throw fail("parameter count " + std::to_string(n_params) + " does not match layer dims (" +
               std::to_string(model.num_params()) + ")");
  }
  auto theta = model.params();
  for (std::size_t i = 0; i < n_params; ++i) {
    next("parameter value");
    char* end = nullptr;
    theta[i] = std::strtod(line.c_str(), &end);
    if (end == line.c_str() || !std::isfinite(theta[i])) throw fail("bad parameter value '" + line + "'");
  }
  return model;
}

void save_checkpoint(const Mlp& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  out << checkpoint_text(model);
  if (!out) throw FormatError("failed writing '" + path.string() + "'");
}

Mlp load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_checkpoint(buf.str());
}

}  // namespace dcoef
