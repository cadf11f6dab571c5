#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "sevit/layers.hpp"

namespace sevit {

/// The four wirings compared in the ablation. Numeric values are the
/// ablation row labels.
enum class Variant : int {
  seq_vit_then_bilstm = 1,  // SE-ViT tokens feed the BiLSTM
  seq_bilstm_then_vit = 2,  // BiLSTM sequence feeds the SE-ViT block
  parallel_h32 = 3,         // both branches on the input, fused (H = 32)
  parallel_h64 = 4,         // same, H = 64
};

std::string_view variant_name(Variant v);
/// "#1" .. "#4"
std::string variant_label(Variant v);
/// Accepts "1".."4" or the variant name.
Variant parse_variant(std::string_view text);
bool is_parallel(Variant v);
/// BiLSTM width the variant is defined with (32, or 64 for parallel_h64).
Index default_hidden(Variant v);

struct ModelSpec {
  Variant variant = Variant::parallel_h32;
  Index steps = 60;
  Index input_channels = 1;
  Index embed = 32;
  Index se_ratio = 4;
  Index hidden = 32;
  Index n_classes = 6;
  double norm_eps = 1e-5;

  /// Spec with the variant's own BiLSTM width and the default E, r.
  static ModelSpec for_variant(Variant v, Index steps, Index n_classes = 6);

  /// Throws ConfigError naming the first offending field.
  void validate() const;

  /// Width of the fused feature vector entering the classification head.
  Index head_width() const;

  bool operator==(const ModelSpec&) const = default;
};

struct ModelParams {
  VitSeBlockParams<double> vit;
  BiLstmParams<double> lstm;
  DenseParams<double> head;

  ModelParams zeros_like() const { return {vit.zeros_like(), lstm.zeros_like(), head.zeros_like()}; }
};

/// Visits every parameter tensor in registry order as f(name, tensor).
/// Works for const and mutable parameter sets.
template <typename Params, typename F>
void for_each_param(Params& p, F&& f) {
  f("vit.embed.weight", p.vit.embed.weight);
  f("vit.embed.bias", p.vit.embed.bias);
  f("vit.se.reduce.weight", p.vit.se.reduce.weight);
  f("vit.se.reduce.bias", p.vit.se.reduce.bias);
  f("vit.se.expand.weight", p.vit.se.expand.weight);
  f("vit.se.expand.bias", p.vit.se.expand.bias);
  f("vit.norm.gain", p.vit.norm.gain);
  f("vit.norm.bias", p.vit.norm.bias);
  f("bilstm.fwd.input_weights", p.lstm.forward_dir.input_weights);
  f("bilstm.fwd.recurrent_weights", p.lstm.forward_dir.recurrent_weights);
  f("bilstm.fwd.bias", p.lstm.forward_dir.bias);
  f("bilstm.bwd.input_weights", p.lstm.backward_dir.input_weights);
  f("bilstm.bwd.recurrent_weights", p.lstm.backward_dir.recurrent_weights);
  f("bilstm.bwd.bias", p.lstm.backward_dir.bias);
  f("head.weight", p.head.weight);
  f("head.bias", p.head.bias);
}

/// Non-owning view of one parameter tensor.
struct ParamView {
  std::string name;
  double* data = nullptr;
  Index rows = 0;
  Index cols = 0;

  Index size() const { return rows * cols; }
  Eigen::Map<RowMatrixd> map() const { return {data, rows, cols}; }
};

std::vector<ParamView> param_views(ModelParams& p);

/// Copies all parameters into one vector in registry order, and back.
Vectord flatten_params(const ModelParams& p);
void unflatten_params(const Vectord& flat, ModelParams& p);

struct ModelCache {
  VitSeBlockCache<double> vit;
  BiLstmCache<double> lstm;
  RowMatrixd head_input;
};

struct ForwardResult {
  RowMatrixd logits;
  RowMatrixd probs;
  ModelCache cache;
};

class Model {
 public:
  Model(ModelSpec spec, ModelParams params);

  const ModelSpec& spec() const { return spec_; }
  const ModelParams& params() const { return params_; }
  ModelParams& params() { return params_; }

  Index count_params() const;

 private:
  ModelSpec spec_;
  ModelParams params_;
};

/// Initializes every parameter from rng. Deterministic in (spec, rng state).
Model build_model(const ModelSpec& spec, Rng& rng);
Model build_model(const ModelSpec& spec, std::uint64_t seed);

/// x is batch x T x input_channels; probs rows sum to one.
ForwardResult forward(const Model& m, const Tensor3d& x);

/// Parameter gradients of a loss given its gradient w.r.t. the head logits.
ModelParams backward(const Model& m, const ModelCache& cache, const RowMatrixd& dlogits);

/// Row-wise argmax; ties go to the lowest index.
std::vector<int> argmax_rows(const RowMatrixd& scores);
std::vector<int> predict(const Model& m, const Tensor3d& x);

Index count_params(const Model& m);

/// Text weights format with hex-float values; load(save(m)) is bit-exact.
void save_model(const Model& m, std::ostream& os);
void save_model(const Model& m, const std::string& path);
Model load_model(std::istream& is);
Model load_model(const std::string& path);

}  // namespace sevit
