#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace flt {

enum class Activation { kIdentity, kRelu, kSoftmaxOutput };
enum class Visibility { kCommon, kPrivate };
enum class VisibilityFilter { kCommon, kPrivate, kAll };

const char* to_string(Activation a);
const char* to_string(Visibility v);
Activation parse_activation(const std::string& s);
Visibility parse_visibility(const std::string& s);
VisibilityFilter parse_visibility_filter(const std::string& s);

bool selected(Visibility v, VisibilityFilter filter);

// Dense row-major matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct LayerSpec {
  std::string name;
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  Activation activation = Activation::kRelu;
  Visibility visibility = Visibility::kCommon;

  std::size_t parameter_count() const { return output_dim * input_dim + output_dim; }
  bool operator==(const LayerSpec&) const = default;
};

// Throws ConfigError if dims are zero, do not chain, or the softmax layer is
// missing, duplicated, or not last. Names must be unique.
void validate_specs(std::span<const LayerSpec> specs);

struct Layer {
  LayerSpec spec;
  Matrix weights;  // (output_dim, input_dim)
  std::vector<double> bias;

  bool operator==(const Layer&) const = default;
};

struct LayeredModel {
  int model_id = 0;
  std::vector<Layer> layers;

  std::size_t parameter_count() const;
  std::size_t input_dim() const { return layers.front().spec.input_dim; }
  std::size_t num_classes() const { return layers.back().spec.output_dim; }
  std::vector<LayerSpec> specs() const;
  // Index of the named layer, or throws InputError.
  std::size_t layer_index(const std::string& name) const;

  bool operator==(const LayeredModel&) const = default;
};

struct LayerGradient {
  Matrix weights;
  std::vector<double> bias;
};
using Gradients = std::vector<LayerGradient>;

double squared_norm(const LayerGradient& g);
double gradient_norm(const Gradients& g);

// Flattened parameters of one layer: weights row-major, then bias.
struct ParamView {
  std::string layer_name;
  std::vector<double> values;
  Visibility visibility = Visibility::kCommon;

  bool operator==(const ParamView&) const = default;
};

LayeredModel init_layered_model(std::span<const LayerSpec> specs, std::uint64_t seed,
                                int model_id = 0);

// Row-wise class probabilities, shape (batch, num_classes).
Matrix forward(const LayeredModel& model, const Matrix& inputs);

struct LossAndGradient {
  double loss = 0.0;  // mean cross-entropy
  Gradients gradients;
};

LossAndGradient loss_and_gradient(const LayeredModel& model, const Matrix& inputs,
                                  std::span<const int> labels);

double mean_cross_entropy(const LayeredModel& model, const Matrix& inputs,
                          std::span<const int> labels);

// p <- p - lr * g for every parameter.
LayeredModel sgd_step(LayeredModel model, const Gradients& gradients, double lr);
// Per-layer learning rates, one entry per layer.
LayeredModel sgd_step(LayeredModel model, const Gradients& gradients,
                      std::span<const double> layer_lrs);

std::vector<ParamView> extract_params(const LayeredModel& model, VisibilityFilter filter);
// Writes views back by layer name. Lengths must match.
void apply_params(LayeredModel& model, std::span<const ParamView> views);

std::vector<double> concatenate(std::span<const ParamView> views);
// Inverse of concatenate using the lengths of `shape`.
std::vector<ParamView> split_like(std::span<const double> flat,
                                  std::span<const ParamView> shape);

std::vector<int> predict(const LayeredModel& model, const Matrix& inputs);
double accuracy(const LayeredModel& model, const Matrix& inputs, std::span<const int> labels);
// Ties resolve to the lowest index.
int argmax(std::span<const double> row);

// Text checkpoint, 17 significant digits per value.
void save_checkpoint(const LayeredModel& model, std::ostream& out);
LayeredModel load_checkpoint(std::istream& in);
void save_checkpoint_file(const LayeredModel& model, const std::string& path);
LayeredModel load_checkpoint_file(const std::string& path);

}  // namespace flt
