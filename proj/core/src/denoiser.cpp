#include "sdpm/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <nlohmann/json.hpp>

#include "sdpm/errors.hpp"

namespace sdpm {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kLayerNormEps = 1e-5;

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Eigen::MatrixXd activate(Activation a, const Eigen::MatrixXd& z) {
  if (a == Activation::ReLU) return z.cwiseMax(0.0);
  return z.unaryExpr([](double v) { return v * sigmoid(v); });
}

Eigen::MatrixXd activation_grad(Activation a, const Eigen::MatrixXd& z) {
  if (a == Activation::ReLU) return z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
  return z.unaryExpr([](double v) {
    const double s = sigmoid(v);
    return s * (1.0 + v * (1.0 - s));
  });
}

Eigen::MatrixXd silu(const Eigen::MatrixXd& z) { return activate(Activation::SiLU, z); }

// Column-wise normalization over features.
void layer_norm(const Eigen::MatrixXd& z, Eigen::MatrixXd& normed, Eigen::RowVectorXd& inv_std) {
  const double h = static_cast<double>(z.rows());
  const Eigen::RowVectorXd mean = z.colwise().sum() / h;
  normed = z.rowwise() - mean;
  const Eigen::RowVectorXd var = normed.cwiseAbs2().colwise().sum() / h;
  inv_std = (var.array() + kLayerNormEps).rsqrt().matrix();
  normed = normed.array().rowwise() * inv_std.array();
}

Eigen::MatrixXd layer_norm_backward(const Eigen::MatrixXd& g_normed, const Eigen::MatrixXd& normed,
                                    const Eigen::RowVectorXd& inv_std) {
  const double h = static_cast<double>(g_normed.rows());
  const Eigen::RowVectorXd mean_g = g_normed.colwise().sum() / h;
  const Eigen::RowVectorXd mean_gn = g_normed.cwiseProduct(normed).colwise().sum() / h;
  Eigen::MatrixXd out = g_normed.rowwise() - mean_g;
  out -= (normed.array().rowwise() * mean_gn.array()).matrix();
  return out.array().rowwise() * inv_std.array();
}

Eigen::MatrixXd dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  Eigen::MatrixXd mask(rows, cols);
  const double keep = 1.0 / (1.0 - p);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) mask(i, j) = rng.uniform() < p ? 0.0 : keep;
  }
  return mask;
}

void xavier(Eigen::Map<Eigen::MatrixXd> w, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = a * (2.0 * rng.uniform() - 1.0);
}

}  // namespace

const char* to_string(Activation a) { return a == Activation::ReLU ? "relu" : "silu"; }

const char* to_string(NormMode m) {
  switch (m) {
    case NormMode::None: return "none";
    case NormMode::Layer: return "layer";
    case NormMode::AdaLNZero: return "adaln_zero";
  }
  return "?";
}

const char* to_string(CategoricalMode m) { return m == CategoricalMode::Embedding ? "embedding" : "raw"; }

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::ReLU;
  if (s == "silu") return Activation::SiLU;
  throw ValidationError("unknown activation '" + s + "'");
}

NormMode norm_mode_from_string(const std::string& s) {
  if (s == "none") return NormMode::None;
  if (s == "layer") return NormMode::Layer;
  if (s == "adaln_zero") return NormMode::AdaLNZero;
  throw ValidationError("unknown norm mode '" + s + "'");
}

CategoricalMode categorical_mode_from_string(const std::string& s) {
  if (s == "embedding") return CategoricalMode::Embedding;
  if (s == "raw") return CategoricalMode::Raw;
  throw ValidationError("unknown categorical mode '" + s + "'");
}

void NetConfig::validate() const {
  if (hidden_layers < 1) throw ValidationError("net: hidden_layers must be >= 1");
  if (hidden_dim < 1) throw ValidationError("net: hidden_dim must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("net: dropout must lie in [0, 1)");
  if (fourier_frequencies < 1) throw ValidationError("net: fourier_frequencies must be >= 1");
  if (!(fourier_init_scale > 0.0)) throw ValidationError("net: fourier_init_scale must be positive");
  if (step_embed_dim < 2 || step_embed_dim % 2 != 0) throw ValidationError("net: step_embed_dim must be even and >= 2");
  if (categorical == CategoricalMode::Embedding && categorical_embed_dim < 1) {
    throw ValidationError("net: categorical_embed_dim must be >= 1");
  }
  if (noise_embed && noise_embed_dim < 1) throw ValidationError("net: noise_embed_dim must be >= 1");
}

nlohmann::json NetConfig::to_json() const {
  return {{"hidden_layers", hidden_layers},
          {"hidden_dim", hidden_dim},
          {"activation", to_string(activation)},
          {"norm", to_string(norm)},
          {"dropout", dropout},
          {"fourier_frequencies", fourier_frequencies},
          {"fourier_init_scale", fourier_init_scale},
          {"categorical", to_string(categorical)},
          {"categorical_embed_dim", categorical_embed_dim},
          {"step_embed_dim", step_embed_dim},
          {"noise_embed", noise_embed},
          {"noise_embed_dim", noise_embed_dim}};
}

NetConfig NetConfig::from_json(const nlohmann::json& j) {
  NetConfig c;
  c.hidden_layers = j.at("hidden_layers").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.activation = activation_from_string(j.at("activation").get<std::string>());
  c.norm = norm_mode_from_string(j.at("norm").get<std::string>());
  c.dropout = j.at("dropout").get<double>();
  c.fourier_frequencies = j.at("fourier_frequencies").get<std::size_t>();
  c.fourier_init_scale = j.at("fourier_init_scale").get<double>();
  c.categorical = categorical_mode_from_string(j.at("categorical").get<std::string>());
  c.categorical_embed_dim = j.at("categorical_embed_dim").get<std::size_t>();
  c.step_embed_dim = j.at("step_embed_dim").get<std::size_t>();
  c.noise_embed = j.at("noise_embed").get<bool>();
  c.noise_embed_dim = j.at("noise_embed_dim").get<std::size_t>();
  c.validate();
  return c;
}

void step_encoding(double step_value, std::span<double> out) {
  const std::size_t k = out.size() / 2;
  for (std::size_t j = 0; j < k; ++j) {
    const double w = std::exp(-std::log(1e4) * static_cast<double>(j) / static_cast<double>(k));
    out[j] = std::sin(step_value * w);
    out[k + j] = std::cos(step_value * w);
  }
}

void fourier_features(double x, std::span<const double> frequencies, std::span<double> out) {
  for (std::size_t j = 0; j < frequencies.size(); ++j) {
    const double theta = kTwoPi * frequencies[j] * x;
    out[2 * j] = std::sin(theta);
    out[2 * j + 1] = std::cos(theta);
  }
}

DenoiserNet::DenoiserNet(NetConfig config, FeatureLayout layout, std::uint64_t init_seed)
    : config_(std::move(config)), layout_(std::move(layout)) {
  config_.validate();
  const std::size_t h = config_.hidden_dim;
  const std::size_t m = config_.fourier_frequencies;

  for (const auto& block : layout_.blocks) {
    if (block.kind == ColumnKind::Numeric) {
      fourier_ids_.push_back(add_tensor("fourier." + block.name, 1, m));
    } else if (config_.categorical == CategoricalMode::Embedding) {
      embedding_ids_.push_back(add_tensor("embed." + block.name, block.width, config_.categorical_embed_dim));
    }
  }
  if (config_.noise_embed) {
    tau_w_ = add_tensor("noise_embed.weight", config_.noise_embed_dim, 2);
    tau_b_ = add_tensor("noise_embed.bias", config_.noise_embed_dim, 1);
  }

  if (config_.norm == NormMode::AdaLNZero) {
    in_w_ = add_tensor("input.weight", h, tau_dim());
    in_b_ = add_tensor("input.bias", h, 1);
    cond_w_ = add_tensor("cond.weight", h, cond_dim());
    cond_b_ = add_tensor("cond.bias", h, 1);
    for (std::size_t l = 0; l < config_.hidden_layers; ++l) {
      const std::string p = "blocks." + std::to_string(l);
      w_.push_back(add_tensor(p + ".weight", h, h));
      b_.push_back(add_tensor(p + ".bias", h, 1));
      mod_w_.push_back(add_tensor(p + ".modulation.weight", 3 * h, h));
      mod_b_.push_back(add_tensor(p + ".modulation.bias", 3 * h, 1));
    }
  } else {
    std::size_t in = tau_dim() + cond_dim();
    for (std::size_t l = 0; l < config_.hidden_layers; ++l) {
      const std::string p = "layers." + std::to_string(l);
      w_.push_back(add_tensor(p + ".weight", h, in));
      b_.push_back(add_tensor(p + ".bias", h, 1));
      if (config_.norm == NormMode::Layer) {
        ln_gain_.push_back(add_tensor(p + ".norm.gain", h, 1));
        ln_bias_.push_back(add_tensor(p + ".norm.bias", h, 1));
      }
      in = h;
    }
  }
  out_w_ = add_tensor("output.weight", 2, h);
  out_b_ = add_tensor("output.bias", 2, 1);

  params_.assign(tensors_.empty() ? 0 : tensors_.back().offset + tensors_.back().size(), 0.0);

  Rng rng(init_seed);
  for (std::size_t id : fourier_ids_) {
    auto w = mat(id);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = config_.fourier_init_scale * rng.normal();
  }
  for (std::size_t id : embedding_ids_) {
    auto w = mat(id);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();
  }
  if (config_.noise_embed) xavier(mat(tau_w_), rng);
  if (config_.norm == NormMode::AdaLNZero) {
    xavier(mat(in_w_), rng);
    xavier(mat(cond_w_), rng);
  }
  for (std::size_t id : w_) xavier(mat(id), rng);
  for (std::size_t id : ln_gain_) mat(id).setOnes();
  // mod_w_/mod_b_ stay zero: every block starts as the identity.
  xavier(mat(out_w_), rng);
}

std::size_t DenoiserNet::add_tensor(const std::string& name, std::size_t rows, std::size_t cols) {
  const std::size_t offset = tensors_.empty() ? 0 : tensors_.back().offset + tensors_.back().size();
  tensors_.push_back({name, offset, rows, cols});
  return tensors_.size() - 1;
}

const DenoiserNet::Tensor& DenoiserNet::tensor(const std::string& name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return t;
  }
  throw ValidationError("no tensor named '" + name + "'");
}

std::span<double> DenoiserNet::tensor_data(const std::string& name) {
  const auto& t = tensor(name);
  return std::span<double>(params_).subspan(t.offset, t.size());
}

std::size_t DenoiserNet::tau_dim() const { return config_.noise_embed ? config_.noise_embed_dim : 2; }

std::size_t DenoiserNet::fourier_dim() const { return layout_.numeric_count() * 2 * config_.fourier_frequencies; }

std::size_t DenoiserNet::categorical_dim() const {
  if (config_.categorical == CategoricalMode::Embedding) {
    return layout_.categorical_count() * config_.categorical_embed_dim;
  }
  std::size_t w = 0;
  for (const auto& b : layout_.blocks) {
    if (b.kind == ColumnKind::Categorical) w += b.width;
  }
  return w;
}

std::size_t DenoiserNet::cond_dim() const { return fourier_dim() + categorical_dim() + config_.step_embed_dim; }

Eigen::MatrixXd DenoiserNet::conditioning(const Eigen::MatrixXd& x, const Eigen::RowVectorXd& steps) const {
  const Eigen::Index batch = x.cols();
  const std::size_t m = config_.fourier_frequencies;
  Eigen::MatrixXd cond(Eigen::Index(cond_dim()), batch);

  Eigen::Index row = 0;
  std::size_t nf = 0;
  for (const auto& block : layout_.blocks) {
    if (block.kind != ColumnKind::Numeric) continue;
    const auto w = mat(fourier_ids_[nf++]);
    for (Eigen::Index b = 0; b < batch; ++b) {
      const double xv = x(Eigen::Index(block.offset), b);
      for (std::size_t j = 0; j < m; ++j) {
        const double theta = kTwoPi * w(0, Eigen::Index(j)) * xv;
        cond(row + Eigen::Index(2 * j), b) = std::sin(theta);
        cond(row + Eigen::Index(2 * j + 1), b) = std::cos(theta);
      }
    }
    row += Eigen::Index(2 * m);
  }

  std::size_t nc = 0;
  for (const auto& block : layout_.blocks) {
    if (block.kind != ColumnKind::Categorical) continue;
    const auto onehot = x.middleRows(Eigen::Index(block.offset), Eigen::Index(block.width));
    if (config_.categorical == CategoricalMode::Embedding) {
      const auto table = mat(embedding_ids_[nc++]);
      const auto e = Eigen::Index(config_.categorical_embed_dim);
      cond.middleRows(row, e).noalias() = table.transpose() * onehot;
      row += e;
    } else {
      cond.middleRows(row, Eigen::Index(block.width)) = onehot;
      row += Eigen::Index(block.width);
    }
  }

  const auto sd = Eigen::Index(config_.step_embed_dim);
  std::vector<double> enc(config_.step_embed_dim);
  for (Eigen::Index b = 0; b < batch; ++b) {
    step_encoding(steps(b), enc);
    for (Eigen::Index k = 0; k < sd; ++k) cond(row + k, b) = enc[std::size_t(k)];
  }
  return cond;
}

void DenoiserNet::backward_conditioning(const ForwardCache& cache, const Eigen::MatrixXd& g_cond,
                                        std::span<double> grad) const {
  const Eigen::Index batch = cache.batch;
  const std::size_t m = config_.fourier_frequencies;
  Eigen::Index row = 0;
  std::size_t nf = 0;
  for (const auto& block : layout_.blocks) {
    if (block.kind != ColumnKind::Numeric) continue;
    const std::size_t id = fourier_ids_[nf++];
    const auto w = mat(id);
    auto gw = gmat(grad, tensors_[id]);
    for (Eigen::Index b = 0; b < batch; ++b) {
      const double xv = cache.x(Eigen::Index(block.offset), b);
      for (std::size_t j = 0; j < m; ++j) {
        const double theta = kTwoPi * w(0, Eigen::Index(j)) * xv;
        const double gs = g_cond(row + Eigen::Index(2 * j), b);
        const double gc = g_cond(row + Eigen::Index(2 * j + 1), b);
        gw(0, Eigen::Index(j)) += kTwoPi * xv * (gs * std::cos(theta) - gc * std::sin(theta));
      }
    }
    row += Eigen::Index(2 * m);
  }
  std::size_t nc = 0;
  for (const auto& block : layout_.blocks) {
    if (block.kind != ColumnKind::Categorical) continue;
    if (config_.categorical == CategoricalMode::Embedding) {
      const std::size_t id = embedding_ids_[nc++];
      const auto e = Eigen::Index(config_.categorical_embed_dim);
      const auto onehot = cache.x.middleRows(Eigen::Index(block.offset), Eigen::Index(block.width));
      gmat(grad, tensors_[id]).noalias() += onehot * g_cond.middleRows(row, e).transpose();
      row += e;
    } else {
      row += Eigen::Index(block.width);
    }
  }
}

Eigen::MatrixXd DenoiserNet::tau_part(const Eigen::Matrix2Xd& tau) const {
  if (!config_.noise_embed) return tau;
  Eigen::MatrixXd out = mat(tau_w_) * tau;
  out.colwise() += mat(tau_b_).col(0);
  return out;
}

Eigen::Matrix2Xd DenoiserNet::forward_batch(const Eigen::Matrix2Xd& tau, const Eigen::RowVectorXd& steps,
                                            const Eigen::MatrixXd& x, ForwardCache* cache, Rng* dropout_rng) const {
  const Eigen::Index batch = tau.cols();
  if (x.rows() != Eigen::Index(input_dim())) {
    throw ValidationError("denoiser: feature dimension " + std::to_string(x.rows()) + " does not match " +
                          std::to_string(input_dim()));
  }
  if (x.cols() != batch || steps.size() != batch) throw ValidationError("denoiser: batch size mismatch");

  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.batch = batch;
  c.x = x;
  c.steps = steps;
  c.tau = tau;
  c.tau_part = tau_part(tau);
  c.cond = conditioning(x, steps);
  c.layers.assign(config_.hidden_layers, {});

  const bool drop = dropout_rng != nullptr && config_.dropout > 0.0;
  const auto h = Eigen::Index(config_.hidden_dim);

  if (config_.norm == NormMode::AdaLNZero) {
    Eigen::MatrixXd hs = mat(in_w_) * c.tau_part;
    hs.colwise() += mat(in_b_).col(0);
    c.cond_pre = mat(cond_w_) * c.cond;
    c.cond_pre.colwise() += mat(cond_b_).col(0);
    c.cond_act = silu(c.cond_pre);
    for (std::size_t l = 0; l < config_.hidden_layers; ++l) {
      auto& L = c.layers[l];
      L.input = hs;
      layer_norm(hs, L.normed, L.inv_std);
      L.modulation = mat(mod_w_[l]) * c.cond_act;
      L.modulation.colwise() += mat(mod_b_[l]).col(0);
      const auto shift = L.modulation.topRows(h);
      const auto scale = L.modulation.middleRows(h, h);
      const auto gate = L.modulation.bottomRows(h);
      L.modulated = L.normed.cwiseProduct((scale.array() + 1.0).matrix()) + shift;
      L.pre_act = mat(w_[l]) * L.modulated;
      L.pre_act.colwise() += mat(b_[l]).col(0);
      L.act = activate(config_.activation, L.pre_act);
      if (drop) {
        L.mask = dropout_mask(h, batch, config_.dropout, *dropout_rng);
        L.act = L.act.cwiseProduct(L.mask);
      }
      hs += gate.cwiseProduct(L.act);
    }
    c.final_hidden = hs;
  } else {
    Eigen::MatrixXd a(c.tau_part.rows() + c.cond.rows(), batch);
    a << c.tau_part, c.cond;
    for (std::size_t l = 0; l < config_.hidden_layers; ++l) {
      auto& L = c.layers[l];
      L.input = std::move(a);
      Eigen::MatrixXd z = mat(w_[l]) * L.input;
      z.colwise() += mat(b_[l]).col(0);
      if (config_.norm == NormMode::Layer) {
        layer_norm(z, L.normed, L.inv_std);
        z = L.normed.array().colwise() * mat(ln_gain_[l]).col(0).array();
        z.colwise() += mat(ln_bias_[l]).col(0);
      }
      L.pre_act = std::move(z);
      L.act = activate(config_.activation, L.pre_act);
      if (drop) {
        L.mask = dropout_mask(h, batch, config_.dropout, *dropout_rng);
        L.act = L.act.cwiseProduct(L.mask);
      }
      a = L.act;
    }
    c.final_hidden = std::move(a);
  }

  Eigen::Matrix2Xd out = mat(out_w_) * c.final_hidden;
  out.colwise() += mat(out_b_).col(0);
  return out;
}

void DenoiserNet::backward(const ForwardCache& c, const Eigen::Matrix2Xd& g_out, std::span<double> grad) const {
  if (grad.size() != params_.size()) throw ValidationError("denoiser: gradient buffer size mismatch");
  const auto h = Eigen::Index(config_.hidden_dim);

  gmat(grad, tensors_[out_w_]).noalias() += g_out * c.final_hidden.transpose();
  gmat(grad, tensors_[out_b_]) += g_out.rowwise().sum();
  Eigen::MatrixXd g = mat(out_w_).transpose() * g_out;

  Eigen::MatrixXd g_tau_part;
  Eigen::MatrixXd g_cond;

  if (config_.norm == NormMode::AdaLNZero) {
    Eigen::MatrixXd g_cond_act = Eigen::MatrixXd::Zero(h, c.batch);
    for (std::size_t l = config_.hidden_layers; l-- > 0;) {
      const auto& L = c.layers[l];
      const auto scale = L.modulation.middleRows(h, h);
      const auto gate = L.modulation.bottomRows(h);

      Eigen::MatrixXd g_mod(3 * h, c.batch);
      g_mod.bottomRows(h) = g.cwiseProduct(L.act);
      Eigen::MatrixXd g_act = g.cwiseProduct(gate);
      if (L.mask.size() > 0) g_act = g_act.cwiseProduct(L.mask);
      const Eigen::MatrixXd g_pre = g_act.cwiseProduct(activation_grad(config_.activation, L.pre_act));
      gmat(grad, tensors_[w_[l]]).noalias() += g_pre * L.modulated.transpose();
      gmat(grad, tensors_[b_[l]]) += g_pre.rowwise().sum();
      const Eigen::MatrixXd g_modulated = mat(w_[l]).transpose() * g_pre;
      g_mod.topRows(h) = g_modulated;
      g_mod.middleRows(h, h) = g_modulated.cwiseProduct(L.normed);
      const Eigen::MatrixXd g_normed = g_modulated.cwiseProduct((scale.array() + 1.0).matrix());
      g += layer_norm_backward(g_normed, L.normed, L.inv_std);

      gmat(grad, tensors_[mod_w_[l]]).noalias() += g_mod * c.cond_act.transpose();
      gmat(grad, tensors_[mod_b_[l]]) += g_mod.rowwise().sum();
      g_cond_act.noalias() += mat(mod_w_[l]).transpose() * g_mod;
    }
    gmat(grad, tensors_[in_w_]).noalias() += g * c.tau_part.transpose();
    gmat(grad, tensors_[in_b_]) += g.rowwise().sum();
    g_tau_part = mat(in_w_).transpose() * g;

    const Eigen::MatrixXd g_cond_pre =
        g_cond_act.cwiseProduct(activation_grad(Activation::SiLU, c.cond_pre));
    gmat(grad, tensors_[cond_w_]).noalias() += g_cond_pre * c.cond.transpose();
    gmat(grad, tensors_[cond_b_]) += g_cond_pre.rowwise().sum();
    g_cond = mat(cond_w_).transpose() * g_cond_pre;
  } else {
    for (std::size_t l = config_.hidden_layers; l-- > 0;) {
      const auto& L = c.layers[l];
      Eigen::MatrixXd g_act = L.mask.size() > 0 ? Eigen::MatrixXd(g.cwiseProduct(L.mask)) : g;
      Eigen::MatrixXd g_z = g_act.cwiseProduct(activation_grad(config_.activation, L.pre_act));
      if (config_.norm == NormMode::Layer) {
        gmat(grad, tensors_[ln_gain_[l]]) += g_z.cwiseProduct(L.normed).rowwise().sum();
        gmat(grad, tensors_[ln_bias_[l]]) += g_z.rowwise().sum();
        const Eigen::MatrixXd g_normed = g_z.array().colwise() * mat(ln_gain_[l]).col(0).array();
        g_z = layer_norm_backward(g_normed, L.normed, L.inv_std);
      }
      gmat(grad, tensors_[w_[l]]).noalias() += g_z * L.input.transpose();
      gmat(grad, tensors_[b_[l]]) += g_z.rowwise().sum();
      g = mat(w_[l]).transpose() * g_z;
    }
    const auto td = Eigen::Index(tau_dim());
    g_tau_part = g.topRows(td);
    g_cond = g.bottomRows(g.rows() - td);
  }

  if (config_.noise_embed) {
    gmat(grad, tensors_[tau_w_]).noalias() += g_tau_part * c.tau.transpose();
    gmat(grad, tensors_[tau_b_]) += g_tau_part.rowwise().sum();
  }
  backward_conditioning(c, g_cond, grad);
}

Eigen::Matrix2Xd DenoiserNet::predict(const Eigen::Matrix2Xd& tau, double step_value, std::span<const double> x) const {
  if (x.size() != input_dim()) {
    throw ValidationError("denoiser: feature dimension " + std::to_string(x.size()) + " does not match " +
                          std::to_string(input_dim()));
  }
  const auto h = Eigen::Index(config_.hidden_dim);
  Eigen::MatrixXd xm = Eigen::Map<const Eigen::VectorXd>(x.data(), Eigen::Index(x.size()));
  Eigen::RowVectorXd steps(1);
  steps(0) = step_value;
  const Eigen::VectorXd cond = conditioning(xm, steps).col(0);
  const Eigen::MatrixXd tp = tau_part(tau);

  Eigen::MatrixXd hs;
  if (config_.norm == NormMode::AdaLNZero) {
    hs = mat(in_w_) * tp;
    hs.colwise() += mat(in_b_).col(0);
    const Eigen::VectorXd cond_act = silu(mat(cond_w_) * cond + mat(cond_b_).col(0));
    Eigen::MatrixXd normed;
    Eigen::RowVectorXd inv_std;
    for (std::size_t l = 0; l < config_.hidden_layers; ++l) {
      const Eigen::VectorXd mod = mat(mod_w_[l]) * cond_act + mat(mod_b_[l]).col(0);
      layer_norm(hs, normed, inv_std);
      Eigen::MatrixXd z = (normed.array().colwise() * (mod.segment(h, h).array() + 1.0)).matrix();
      z.colwise() += mod.head(h);
      Eigen::MatrixXd pre = mat(w_[l]) * z;
      pre.colwise() += mat(b_[l]).col(0);
      hs += (activate(config_.activation, pre).array().colwise() * mod.tail(h).array()).matrix();
    }
  } else {
    const auto td = Eigen::Index(tau_dim());
    for (std::size_t l = 0; l < config_.hidden_layers; ++l) {
      const auto W = mat(w_[l]);
      Eigen::MatrixXd z;
      if (l == 0) {
        // The conditioning columns are shared by every trajectory.
        const Eigen::VectorXd shared = W.rightCols(W.cols() - td) * cond + mat(b_[0]).col(0);
        z = W.leftCols(td) * tp;
        z.colwise() += shared;
      } else {
        z = W * hs;
        z.colwise() += mat(b_[l]).col(0);
      }
      if (config_.norm == NormMode::Layer) {
        Eigen::MatrixXd normed;
        Eigen::RowVectorXd inv_std;
        layer_norm(z, normed, inv_std);
        z = normed.array().colwise() * mat(ln_gain_[l]).col(0).array();
        z.colwise() += mat(ln_bias_[l]).col(0);
      }
      hs = activate(config_.activation, z);
    }
  }
  Eigen::Matrix2Xd out = mat(out_w_) * hs;
  out.colwise() += mat(out_b_).col(0);
  return out;
}

Vec2 DenoiserNet::forward(const Vec2& tau, double step_value, std::span<const double> x) const {
  Eigen::Matrix2Xd t(2, 1);
  t << tau[0], tau[1];
  const Eigen::Matrix2Xd out = predict(t, step_value, x);
  return {out(0, 0), out(1, 0)};
}

Eigen::Matrix2Xd DenoiserNet::predict_without_blocks(const Eigen::Matrix2Xd& tau) const {
  if (config_.norm != NormMode::AdaLNZero) throw ValidationError("predict_without_blocks: AdaLN-Zero only");
  Eigen::MatrixXd hs = mat(in_w_) * tau_part(tau);
  hs.colwise() += mat(in_b_).col(0);
  Eigen::Matrix2Xd out = mat(out_w_) * hs;
  out.colwise() += mat(out_b_).col(0);
  return out;
}

}  // namespace sdpm
