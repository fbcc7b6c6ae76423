#include "flt/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include "flt/error.hpp"
#include "flt/rng.hpp"

namespace flt {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kOk: return "ok";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kInput: return "input";
    case ErrorCode::kNumeric: return "numeric";
    case ErrorCode::kStructure: return "structure";
    case ErrorCode::kEncoding: return "encoding";
    case ErrorCode::kProtocol: return "protocol";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kInternal: return "internal";
  }
  return "unknown";
}

const char* to_string(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kRelu: return "relu";
    case Activation::kSoftmaxOutput: return "softmax";
  }
  return "?";
}

const char* to_string(Visibility v) {
  return v == Visibility::kCommon ? "common" : "private";
}

Activation parse_activation(const std::string& s) {
  if (s == "identity") return Activation::kIdentity;
  if (s == "relu") return Activation::kRelu;
  if (s == "softmax" || s == "softmax-output") return Activation::kSoftmaxOutput;
  throw ConfigError("unknown activation '" + s + "'");
}

Visibility parse_visibility(const std::string& s) {
  if (s == "common") return Visibility::kCommon;
  if (s == "private") return Visibility::kPrivate;
  throw ConfigError("unknown visibility '" + s + "'");
}

VisibilityFilter parse_visibility_filter(const std::string& s) {
  if (s == "common") return VisibilityFilter::kCommon;
  if (s == "private") return VisibilityFilter::kPrivate;
  if (s == "all") return VisibilityFilter::kAll;
  throw ConfigError("unknown visibility filter '" + s + "'");
}

bool selected(Visibility v, VisibilityFilter filter) {
  switch (filter) {
    case VisibilityFilter::kAll: return true;
    case VisibilityFilter::kCommon: return v == Visibility::kCommon;
    case VisibilityFilter::kPrivate: return v == Visibility::kPrivate;
  }
  return false;
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw InputError("matrix data length " + std::to_string(data_.size()) +
                     " does not match shape " + std::to_string(rows_) + "x" +
                     std::to_string(cols_));
  }
}

void validate_specs(std::span<const LayerSpec> specs) {
  if (specs.empty()) throw ConfigError("model needs at least one layer");
  std::set<std::string> names;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& s = specs[i];
    if (s.input_dim == 0 || s.output_dim == 0) {
      throw ConfigError("layer '" + s.name + "' has a zero dimension");
    }
    if (s.name.empty() ||
        std::any_of(s.name.begin(), s.name.end(), [](char c) { return std::isspace(c); })) {
      throw ConfigError("layer " + std::to_string(i) + " needs a non-empty name without whitespace");
    }
    if (!names.insert(s.name).second) throw ConfigError("duplicate layer name '" + s.name + "'");
    if (i > 0 && specs[i - 1].output_dim != s.input_dim) {
      throw ConfigError("layer '" + s.name + "' input_dim " + std::to_string(s.input_dim) +
                        " does not chain with previous output_dim " +
                        std::to_string(specs[i - 1].output_dim));
    }
    const bool last = i + 1 == specs.size();
    if (s.activation == Activation::kSoftmaxOutput && !last) {
      throw ConfigError("softmax-output layer '" + s.name + "' must be last");
    }
    if (last && s.activation != Activation::kSoftmaxOutput) {
      throw ConfigError("last layer '" + s.name + "' must be softmax-output");
    }
  }
}

std::size_t LayeredModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.spec.parameter_count();
  return n;
}

std::vector<LayerSpec> LayeredModel::specs() const {
  std::vector<LayerSpec> out;
  out.reserve(layers.size());
  for (const auto& l : layers) out.push_back(l.spec);
  return out;
}

std::size_t LayeredModel::layer_index(const std::string& name) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].spec.name == name) return i;
  }
  throw InputError("model has no layer named '" + name + "'");
}

double squared_norm(const LayerGradient& g) {
  double s = 0.0;
  for (double v : g.weights.data()) s += v * v;
  for (double v : g.bias) s += v * v;
  return s;
}

double gradient_norm(const Gradients& g) {
  double s = 0.0;
  for (const auto& l : g) s += squared_norm(l);
  return std::sqrt(s);
}

LayeredModel init_layered_model(std::span<const LayerSpec> specs, std::uint64_t seed,
                                int model_id) {
  validate_specs(specs);
  Rng rng(derive_seed(seed, {seed_tag::kModelInit}));
  LayeredModel model;
  model.model_id = model_id;
  for (const auto& s : specs) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(s.input_dim));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Layer layer{s, Matrix(s.output_dim, s.input_dim), std::vector<double>(s.output_dim, 0.0)};
    for (double& w : layer.weights.data()) w = dist(rng);
    model.layers.push_back(std::move(layer));
  }
  return model;
}

namespace {

void check_inputs(const LayeredModel& model, const Matrix& inputs) {
  if (model.layers.empty()) throw InputError("model has no layers");
  if (inputs.cols() != model.input_dim()) {
    throw InputError("input has " + std::to_string(inputs.cols()) + " columns, model expects " +
                     std::to_string(model.input_dim()));
  }
  for (double v : inputs.data()) {
    if (!std::isfinite(v)) throw NumericError("non-finite input value");
  }
}

// out = in * W^T + b, then activation.
Matrix dense(const Layer& layer, const Matrix& in) {
  const auto& w = layer.weights;
  Matrix out(in.rows(), w.rows());
  for (std::size_t r = 0; r < in.rows(); ++r) {
    const auto x = in.row(r);
    auto y = out.row(r);
    for (std::size_t o = 0; o < w.rows(); ++o) {
      const auto wr = w.row(o);
      double acc = layer.bias[o];
      for (std::size_t i = 0; i < x.size(); ++i) acc += wr[i] * x[i];
      y[o] = acc;
    }
  }
  switch (layer.spec.activation) {
    case Activation::kIdentity:
      break;
    case Activation::kRelu:
      for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
      break;
    case Activation::kSoftmaxOutput:
      for (std::size_t r = 0; r < out.rows(); ++r) {
        auto y = out.row(r);
        const double m = *std::max_element(y.begin(), y.end());
        double z = 0.0;
        for (double& v : y) {
          v = std::exp(v - m);
          z += v;
        }
        for (double& v : y) v /= z;
      }
      break;
  }
  return out;
}

// activations[0] = inputs, activations[k+1] = output of layer k.
std::vector<Matrix> forward_all(const LayeredModel& model, const Matrix& inputs) {
  check_inputs(model, inputs);
  std::vector<Matrix> acts;
  acts.reserve(model.layers.size() + 1);
  acts.push_back(inputs);
  for (const auto& layer : model.layers) acts.push_back(dense(layer, acts.back()));
  return acts;
}

void check_labels(const LayeredModel& model, const Matrix& inputs, std::span<const int> labels) {
  if (inputs.rows() == 0) throw InputError("empty batch");
  if (labels.size() != inputs.rows()) {
    throw InputError("label count " + std::to_string(labels.size()) + " != batch size " +
                     std::to_string(inputs.rows()));
  }
  const int classes = static_cast<int>(model.num_classes());
  for (int y : labels) {
    if (y < 0 || y >= classes) throw InputError("label " + std::to_string(y) + " out of range");
  }
}

constexpr double kProbFloor = std::numeric_limits<double>::min();

}  // namespace

Matrix forward(const LayeredModel& model, const Matrix& inputs) {
  check_inputs(model, inputs);
  Matrix h = inputs;
  for (const auto& layer : model.layers) h = dense(layer, h);
  return h;
}

double mean_cross_entropy(const LayeredModel& model, const Matrix& inputs,
                          std::span<const int> labels) {
  check_labels(model, inputs, labels);
  const Matrix probs = forward(model, inputs);
  double loss = 0.0;
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    loss -= std::log(std::max(probs(r, labels[r]), kProbFloor));
  }
  return loss / static_cast<double>(probs.rows());
}

LossAndGradient loss_and_gradient(const LayeredModel& model, const Matrix& inputs,
                                  std::span<const int> labels) {
  check_labels(model, inputs, labels);
  const auto acts = forward_all(model, inputs);
  const std::size_t batch = inputs.rows();
  const double inv_batch = 1.0 / static_cast<double>(batch);

  LossAndGradient out;
  const Matrix& probs = acts.back();
  for (std::size_t r = 0; r < batch; ++r) {
    out.loss -= std::log(std::max(probs(r, labels[r]), kProbFloor));
  }
  out.loss *= inv_batch;

  // delta = dLoss/d(pre-activation) of the current layer.
  Matrix delta = probs;
  for (std::size_t r = 0; r < batch; ++r) delta(r, labels[r]) -= 1.0;
  for (double& v : delta.data()) v *= inv_batch;

  out.gradients.resize(model.layers.size());
  for (std::size_t k = model.layers.size(); k-- > 0;) {
    const Layer& layer = model.layers[k];
    const Matrix& in = acts[k];
    LayerGradient g{Matrix(layer.spec.output_dim, layer.spec.input_dim),
                    std::vector<double>(layer.spec.output_dim, 0.0)};
    for (std::size_t r = 0; r < batch; ++r) {
      const auto d = delta.row(r);
      const auto x = in.row(r);
      for (std::size_t o = 0; o < d.size(); ++o) {
        if (d[o] == 0.0) continue;
        auto gw = g.weights.row(o);
        for (std::size_t i = 0; i < x.size(); ++i) gw[i] += d[o] * x[i];
        g.bias[o] += d[o];
      }
    }
    if (k > 0) {
      Matrix prev(batch, layer.spec.input_dim);
      for (std::size_t r = 0; r < batch; ++r) {
        const auto d = delta.row(r);
        auto p = prev.row(r);
        for (std::size_t o = 0; o < d.size(); ++o) {
          if (d[o] == 0.0) continue;
          const auto wr = layer.weights.row(o);
          for (std::size_t i = 0; i < p.size(); ++i) p[i] += d[o] * wr[i];
        }
      }
      // Backprop through the previous layer's activation; acts[k] is its output.
      const Activation act = model.layers[k - 1].spec.activation;
      if (act == Activation::kRelu) {
        for (std::size_t i = 0; i < prev.size(); ++i) {
          if (acts[k].data()[i] <= 0.0) prev.data()[i] = 0.0;
        }
      }
      delta = std::move(prev);
    }
    out.gradients[k] = std::move(g);
  }
  return out;
}

namespace {

void check_gradient_shapes(const LayeredModel& model, const Gradients& gradients) {
  if (gradients.size() != model.layers.size()) {
    throw StructureError("gradient layer count mismatch");
  }
  for (std::size_t k = 0; k < gradients.size(); ++k) {
    const auto& l = model.layers[k];
    if (gradients[k].weights.rows() != l.weights.rows() ||
        gradients[k].weights.cols() != l.weights.cols() ||
        gradients[k].bias.size() != l.bias.size()) {
      throw StructureError("gradient shape mismatch in layer '" + l.spec.name + "'");
    }
  }
}

}  // namespace

LayeredModel sgd_step(LayeredModel model, const Gradients& gradients,
                      std::span<const double> layer_lrs) {
  check_gradient_shapes(model, gradients);
  if (layer_lrs.size() != model.layers.size()) {
    throw ConfigError("need one learning rate per layer");
  }
  for (std::size_t k = 0; k < model.layers.size(); ++k) {
    const double lr = layer_lrs[k];
    if (!(lr > 0.0) || !std::isfinite(lr)) {
      throw ConfigError("learning rate must be positive and finite");
    }
    auto& w = model.layers[k].weights.data();
    const auto& gw = gradients[k].weights.data();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * gw[i];
    auto& b = model.layers[k].bias;
    for (std::size_t i = 0; i < b.size(); ++i) b[i] -= lr * gradients[k].bias[i];
  }
  return model;
}

LayeredModel sgd_step(LayeredModel model, const Gradients& gradients, double lr) {
  const std::vector<double> lrs(model.layers.size(), lr);
  return sgd_step(std::move(model), gradients, lrs);
}

std::vector<ParamView> extract_params(const LayeredModel& model, VisibilityFilter filter) {
  std::vector<ParamView> out;
  for (const auto& l : model.layers) {
    if (!selected(l.spec.visibility, filter)) continue;
    ParamView v{l.spec.name, {}, l.spec.visibility};
    v.values.reserve(l.spec.parameter_count());
    v.values.insert(v.values.end(), l.weights.data().begin(), l.weights.data().end());
    v.values.insert(v.values.end(), l.bias.begin(), l.bias.end());
    out.push_back(std::move(v));
  }
  return out;
}

void apply_params(LayeredModel& model, std::span<const ParamView> views) {
  for (const auto& v : views) {
    auto& l = model.layers[model.layer_index(v.layer_name)];
    if (v.values.size() != l.spec.parameter_count()) {
      throw StructureError("param view for '" + v.layer_name + "' has length " +
                           std::to_string(v.values.size()) + ", expected " +
                           std::to_string(l.spec.parameter_count()));
    }
    const std::size_t nw = l.weights.size();
    std::copy_n(v.values.begin(), nw, l.weights.data().begin());
    std::copy(v.values.begin() + static_cast<std::ptrdiff_t>(nw), v.values.end(), l.bias.begin());
  }
}

std::vector<double> concatenate(std::span<const ParamView> views) {
  std::vector<double> out;
  for (const auto& v : views) out.insert(out.end(), v.values.begin(), v.values.end());
  return out;
}

std::vector<ParamView> split_like(std::span<const double> flat, std::span<const ParamView> shape) {
  std::vector<ParamView> out;
  std::size_t offset = 0;
  for (const auto& s : shape) {
    if (offset + s.values.size() > flat.size()) throw StructureError("flat array too short");
    ParamView v{s.layer_name, {}, s.visibility};
    v.values.assign(flat.begin() + static_cast<std::ptrdiff_t>(offset),
                    flat.begin() + static_cast<std::ptrdiff_t>(offset + s.values.size()));
    offset += s.values.size();
    out.push_back(std::move(v));
  }
  if (offset != flat.size()) throw StructureError("flat array too long");
  return out;
}

int argmax(std::span<const double> row) {
  return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

std::vector<int> predict(const LayeredModel& model, const Matrix& inputs) {
  const Matrix probs = forward(model, inputs);
  std::vector<int> out(probs.rows());
  for (std::size_t r = 0; r < probs.rows(); ++r) out[r] = argmax(probs.row(r));
  return out;
}

double accuracy(const LayeredModel& model, const Matrix& inputs, std::span<const int> labels) {
  if (labels.empty()) return 0.0;
  const auto pred = predict(model, inputs);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

namespace {

void write_values(std::ostream& out, const char* tag, std::span<const double> values) {
  out << tag;
  char buf[32];
  for (double v : values) {
    std::snprintf(buf, sizeof(buf), " %.17g", v);
    out << buf;
  }
  out << '\n';
}

std::vector<double> read_values(std::istream& in, const char* tag, std::size_t n) {
  std::string line;
  if (!std::getline(in, line)) throw IoError(std::string("checkpoint truncated before '") + tag + "'");
  std::istringstream ls(line);
  std::string t;
  ls >> t;
  if (t != tag) throw IoError(std::string("checkpoint expected '") + tag + "', got '" + t + "'");
  std::vector<double> values;
  values.reserve(n);
  std::string tok;
  while (ls >> tok) {
    try {
      values.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw IoError("checkpoint has malformed number '" + tok + "'");
    }
  }
  if (values.size() != n) {
    throw IoError(std::string("checkpoint '") + tag + "' has " + std::to_string(values.size()) +
                  " values, expected " + std::to_string(n));
  }
  return values;
}

constexpr const char* kCheckpointMagic = "flt-checkpoint 1";

}  // namespace

void save_checkpoint(const LayeredModel& model, std::ostream& out) {
  out << kCheckpointMagic << '\n';
  out << "model_id " << model.model_id << '\n';
  out << "layers " << model.layers.size() << '\n';
  for (const auto& l : model.layers) {
    out << "layer " << l.spec.name << ' ' << l.spec.input_dim << ' ' << l.spec.output_dim << ' '
        << to_string(l.spec.activation) << ' ' << to_string(l.spec.visibility) << '\n';
    write_values(out, "weights", l.weights.data());
    write_values(out, "bias", l.bias);
  }
}

LayeredModel load_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic) {
    throw IoError("not a checkpoint (bad header)");
  }
  LayeredModel model;
  std::string tag;
  std::size_t count = 0;
  if (!(in >> tag >> model.model_id) || tag != "model_id") throw IoError("checkpoint missing model_id");
  if (!(in >> tag >> count) || tag != "layers") throw IoError("checkpoint missing layer count");
  std::getline(in, line);
  for (std::size_t k = 0; k < count; ++k) {
    if (!std::getline(in, line)) throw IoError("checkpoint truncated");
    std::istringstream ls(line);
    LayerSpec s;
    std::string act, vis;
    if (!(ls >> tag >> s.name >> s.input_dim >> s.output_dim >> act >> vis) || tag != "layer") {
      throw IoError("checkpoint has malformed layer line: " + line);
    }
    s.activation = parse_activation(act);
    s.visibility = parse_visibility(vis);
    Layer layer{s, Matrix(s.output_dim, s.input_dim,
                          read_values(in, "weights", s.output_dim * s.input_dim)),
                read_values(in, "bias", s.output_dim)};
    model.layers.push_back(std::move(layer));
  }
  const auto specs = model.specs();
  validate_specs(specs);
  return model;
}

void save_checkpoint_file(const LayeredModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  save_checkpoint(model, out);
}

LayeredModel load_checkpoint_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  return load_checkpoint(in);
}

}  // namespace flt
