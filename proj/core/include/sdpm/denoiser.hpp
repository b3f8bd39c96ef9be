#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "sdpm/dataset.hpp"
#include "sdpm/rng.hpp"
#include "sdpm/schedule.hpp"

namespace sdpm {

enum class Activation { ReLU, SiLU };
enum class NormMode { None, Layer, AdaLNZero };
enum class CategoricalMode { Embedding, Raw };

const char* to_string(Activation a);
const char* to_string(NormMode m);
const char* to_string(CategoricalMode m);
Activation activation_from_string(const std::string& s);
NormMode norm_mode_from_string(const std::string& s);
CategoricalMode categorical_mode_from_string(const std::string& s);

struct NetConfig {
  std::size_t hidden_layers = 3;
  std::size_t hidden_dim = 128;
  Activation activation = Activation::SiLU;
  NormMode norm = NormMode::None;
  double dropout = 0.0;
  std::size_t fourier_frequencies = 16;  // m
  double fourier_init_scale = 0.3;
  CategoricalMode categorical = CategoricalMode::Embedding;
  std::size_t categorical_embed_dim = 4;
  std::size_t step_embed_dim = 16;  // even
  // When set, the noisy target passes through a trainable affine embedding
  // before entering the network; otherwise the raw 2-vector is used.
  bool noise_embed = false;
  std::size_t noise_embed_dim = 16;

  void validate() const;
  nlohmann::json to_json() const;
  static NetConfig from_json(const nlohmann::json& j);
};

// Sinusoidal encoding of a (possibly fractional) step value:
// [sin(v*w_0) .. sin(v*w_{k-1}), cos(v*w_0) .. cos(v*w_{k-1})], w_j = 1e4^(-j/k).
void step_encoding(double step_value, std::span<double> out);

// Trainable Fourier features of one continuous input:
// [sin(2 pi w_1 x), cos(2 pi w_1 x), ..., sin(2 pi w_m x), cos(2 pi w_m x)].
void fourier_features(double x, std::span<const double> frequencies, std::span<double> out);

struct ForwardCache;

// Conditional noise predictor eps_theta(tau_i, step, x). All parameters live
// in one flat vector so optimizers, gradient checks and checkpoints can treat
// them uniformly.
class DenoiserNet {
 public:
  struct Tensor {
    std::string name;
    std::size_t offset;
    std::size_t rows;
    std::size_t cols;
    std::size_t size() const { return rows * cols; }
  };

  DenoiserNet(NetConfig config, FeatureLayout layout, std::uint64_t init_seed);

  const NetConfig& config() const { return config_; }
  const FeatureLayout& layout() const { return layout_; }
  std::size_t input_dim() const { return layout_.width(); }

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  std::size_t parameter_count() const { return params_.size(); }
  const std::vector<Tensor>& tensors() const { return tensors_; }
  const Tensor& tensor(const std::string& name) const;
  std::span<double> tensor_data(const std::string& name);

  // Inference with one shared (step, x) and K noisy targets as columns.
  Eigen::Matrix2Xd predict(const Eigen::Matrix2Xd& tau, double step_value, std::span<const double> x) const;
  Vec2 forward(const Vec2& tau, double step_value, std::span<const double> x) const;

  // Training path: per-column step values and features (x is d x B). When
  // `dropout_rng` is non-null and dropout > 0, dropout masks are drawn from it.
  Eigen::Matrix2Xd forward_batch(const Eigen::Matrix2Xd& tau, const Eigen::RowVectorXd& steps,
                                 const Eigen::MatrixXd& x, ForwardCache* cache, Rng* dropout_rng) const;
  // Accumulates dL/dtheta into `grad` given dL/d(output).
  void backward(const ForwardCache& cache, const Eigen::Matrix2Xd& grad_output, std::span<double> grad) const;

  // Test hook: output of the backbone with every residual block skipped
  // (AdaLN-Zero mode only). Equals predict() while all gates are zero.
  Eigen::Matrix2Xd predict_without_blocks(const Eigen::Matrix2Xd& tau) const;

 private:
  using Map = Eigen::Map<Eigen::MatrixXd>;
  using CMap = Eigen::Map<const Eigen::MatrixXd>;

  std::size_t add_tensor(const std::string& name, std::size_t rows, std::size_t cols);
  Map mat(std::size_t id) { return {params_.data() + tensors_[id].offset, Eigen::Index(tensors_[id].rows), Eigen::Index(tensors_[id].cols)}; }
  CMap mat(std::size_t id) const { return {params_.data() + tensors_[id].offset, Eigen::Index(tensors_[id].rows), Eigen::Index(tensors_[id].cols)}; }
  static Map gmat(std::span<double> g, const Tensor& t) { return {g.data() + t.offset, Eigen::Index(t.rows), Eigen::Index(t.cols)}; }

  std::size_t tau_dim() const;
  std::size_t fourier_dim() const;
  std::size_t categorical_dim() const;
  std::size_t cond_dim() const;

  Eigen::MatrixXd conditioning(const Eigen::MatrixXd& x, const Eigen::RowVectorXd& steps) const;
  Eigen::MatrixXd tau_part(const Eigen::Matrix2Xd& tau) const;
  void backward_conditioning(const ForwardCache& cache, const Eigen::MatrixXd& grad_cond, std::span<double> grad) const;

  NetConfig config_;
  FeatureLayout layout_;
  std::vector<double> params_;
  std::vector<Tensor> tensors_;

  // tensor ids
  std::vector<std::size_t> fourier_ids_;     // one per numeric block (1 x m)
  std::vector<std::size_t> embedding_ids_;   // one per categorical block (n_cat x e)
  std::size_t tau_w_ = 0, tau_b_ = 0;
  std::vector<std::size_t> w_, b_, ln_gain_, ln_bias_;   // hidden layers / blocks
  std::vector<std::size_t> mod_w_, mod_b_;               // AdaLN-Zero heads
  std::size_t in_w_ = 0, in_b_ = 0, cond_w_ = 0, cond_b_ = 0;
  std::size_t out_w_ = 0, out_b_ = 0;
};

// Intermediate values of forward_batch needed for backward().
struct ForwardCache {
  Eigen::Index batch = 0;
  Eigen::MatrixXd x;
  Eigen::RowVectorXd steps;
  Eigen::Matrix2Xd tau;
  Eigen::MatrixXd tau_part;
  Eigen::MatrixXd cond;
  // AdaLN-Zero conditioning projection
  Eigen::MatrixXd cond_pre, cond_act;
  struct Layer {
    Eigen::MatrixXd input;      // MLP: layer input; AdaLN: residual stream h
    Eigen::MatrixXd normed;     // LayerNorm output before affine/modulation
    Eigen::RowVectorXd inv_std;
    Eigen::MatrixXd modulation; // AdaLN: [shift; scale; gate]
    Eigen::MatrixXd modulated;  // AdaLN: normed * (1 + scale) + shift
    Eigen::MatrixXd pre_act;
    Eigen::MatrixXd act;        // after activation and dropout
    Eigen::MatrixXd mask;       // dropout scale per unit (empty when inactive)
  };
  std::vector<Layer> layers;
  Eigen::MatrixXd final_hidden;
};

}  // namespace sdpm
