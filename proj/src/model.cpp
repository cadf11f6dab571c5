#include "sevit/model.hpp"

#include <charconv>

namespace sevit {

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::seq_vit_then_bilstm: return "seq_vit_then_bilstm";
    case Variant::seq_bilstm_then_vit: return "seq_bilstm_then_vit";
    case Variant::parallel_h32: return "parallel_h32";
    case Variant::parallel_h64: return "parallel_h64";
  }
  return "unknown";
}

std::string variant_label(Variant v) { return "#" + std::to_string(static_cast<int>(v)); }

Variant parse_variant(std::string_view text) {
  if (!text.empty() && text.front() == '#') text.remove_prefix(1);
  int number = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), number);
  if (ec == std::errc() && ptr == text.data() + text.size() && number >= 1 && number <= 4) {
    return static_cast<Variant>(number);
  }
  for (int i = 1; i <= 4; ++i) {
    if (variant_name(static_cast<Variant>(i)) == text) return static_cast<Variant>(i);
  }
  throw ConfigError("variant: unknown value '" + std::string(text) + "' (expected 1-4)");
}

bool is_parallel(Variant v) { return v == Variant::parallel_h32 || v == Variant::parallel_h64; }

Index default_hidden(Variant v) { return v == Variant::parallel_h64 ? 64 : 32; }

ModelSpec ModelSpec::for_variant(Variant v, Index steps, Index n_classes) {
  ModelSpec s;
  s.variant = v;
  s.steps = steps;
  s.hidden = default_hidden(v);
  s.n_classes = n_classes;
  return s;
}

void ModelSpec::validate() const {
  const int v = static_cast<int>(variant);
  if (v < 1 || v > 4) throw ConfigError("variant: must be 1-4");
  if (steps < 1) throw ConfigError("steps: must be >= 1");
  if (input_channels < 1) throw ConfigError("input_channels: must be >= 1");
  if (embed < 1) throw ConfigError("embed: must be >= 1");
  if (se_ratio < 1) throw ConfigError("se_ratio: must be >= 1");
  if (hidden < 1) throw ConfigError("hidden: must be >= 1");
  if (n_classes < 2) throw ConfigError("n_classes: must be >= 2");
  if (!(norm_eps > 0.0)) throw ConfigError("norm_eps: must be positive");
}

Index ModelSpec::head_width() const {
  switch (variant) {
    case Variant::seq_vit_then_bilstm: return steps * 2 * hidden;
    case Variant::seq_bilstm_then_vit: return steps * embed;
    case Variant::parallel_h32:
    case Variant::parallel_h64: break;
  }
  return steps * embed + steps * 2 * hidden;
}

std::vector<ParamView> param_views(ModelParams& p) {
  std::vector<ParamView> views;
  for_each_param(p, [&](const char* name, auto& t) {
    views.push_back({name, t.data(), t.rows(), t.cols()});
  });
  return views;
}

Vectord flatten_params(const ModelParams& p) {
  Index total = 0;
  for_each_param(p, [&](const char*, const auto& t) { total += t.size(); });
  Vectord flat(total);
  Index at = 0;
  for_each_param(p, [&](const char*, const auto& t) {
    std::copy(t.data(), t.data() + t.size(), flat.data() + at);
    at += t.size();
  });
  return flat;
}

void unflatten_params(const Vectord& flat, ModelParams& p) {
  Index at = 0;
  for_each_param(p, [&](const char* name, auto& t) {
    if (at + t.size() > flat.size()) {
      throw ShapeError(std::string("unflatten_params: vector too short at ") + name);
    }
    std::copy(flat.data() + at, flat.data() + at + t.size(), t.data());
    at += t.size();
  });
  if (at != flat.size()) throw ShapeError("unflatten_params: vector too long");
}

Model::Model(ModelSpec spec, ModelParams params) : spec_(spec), params_(std::move(params)) {
  spec_.validate();
  if (params_.head.out() != spec_.n_classes || params_.head.in() != spec_.head_width()) {
    throw ShapeError("model head " + shape_of(params_.head.weight) + " does not match spec (" +
                     std::to_string(spec_.head_width()) + " x " +
                     std::to_string(spec_.n_classes) + ")");
  }
}

Index Model::count_params() const {
  Index total = 0;
  for_each_param(params_, [&](const char*, const auto& t) { total += t.size(); });
  return total;
}

Index count_params(const Model& m) { return m.count_params(); }

Model build_model(const ModelSpec& spec, Rng& rng) {
  spec.validate();
  const Index vit_in = spec.variant == Variant::seq_bilstm_then_vit ? 2 * spec.hidden
                                                                    : spec.input_channels;
  const Index lstm_in = spec.variant == Variant::seq_vit_then_bilstm ? spec.embed
                                                                     : spec.input_channels;
  ModelParams p;
  p.vit = VitSeBlockParams<double>::glorot(vit_in, spec.embed, spec.se_ratio, rng);
  p.vit.norm.eps = spec.norm_eps;
  p.lstm = BiLstmParams<double>::glorot(lstm_in, spec.hidden, rng);
  p.head = DenseParams<double>::glorot(spec.head_width(), spec.n_classes, rng);
  return Model(spec, std::move(p));
}

Model build_model(const ModelSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  return build_model(spec, rng);
}

ForwardResult forward(const Model& m, const Tensor3d& x) {
  const ModelSpec& s = m.spec();
  const ModelParams& p = m.params();
  if (x.steps() != s.steps || x.channels() != s.input_channels) {
    throw ShapeError("forward: input " + x.shape_string() + " vs model steps=" +
                     std::to_string(s.steps) + ", channels=" + std::to_string(s.input_channels));
  }
  ForwardResult r;
  switch (s.variant) {
    case Variant::seq_vit_then_bilstm: {
      auto vit = vit_se_block_forward(p.vit, x);
      auto lstm = bilstm_forward(p.lstm, vit.out);
      r.cache.head_input = lstm.seq.flat();
      r.cache.vit = std::move(vit.cache);
      r.cache.lstm = std::move(lstm.cache);
      break;
    }
    case Variant::seq_bilstm_then_vit: {
      auto lstm = bilstm_forward(p.lstm, x);
      auto vit = vit_se_block_forward(p.vit, lstm.seq);
      r.cache.head_input = vit.flat();
      r.cache.vit = std::move(vit.cache);
      r.cache.lstm = std::move(lstm.cache);
      break;
    }
    case Variant::parallel_h32:
    case Variant::parallel_h64: {
      auto vit = vit_se_block_forward(p.vit, x);
      auto lstm = bilstm_forward(p.lstm, x);
      r.cache.head_input = concat_features(vit.flat(), lstm.seq.flat());
      r.cache.vit = std::move(vit.cache);
      r.cache.lstm = std::move(lstm.cache);
      break;
    }
  }
  r.logits = dense_forward(p.head, r.cache.head_input, Activation::none);
  r.probs = softmax_rows(r.logits);
  return r;
}

ModelParams backward(const Model& m, const ModelCache& cache, const RowMatrixd& dlogits) {
  const ModelSpec& s = m.spec();
  const ModelParams& p = m.params();
  ModelParams g;
  auto head = dense_backward(p.head, cache.head_input, Activation::none, dlogits);
  g.head = std::move(head.grads);
  const RowMatrixd& dfeat = head.input_grad;
  switch (s.variant) {
    case Variant::seq_vit_then_bilstm: {
      auto lstm = bilstm_backward(p.lstm, cache.lstm, dfeat);
      auto vit = vit_se_block_backward(p.vit, cache.vit, lstm.input_grad);
      g.lstm = std::move(lstm.grads);
      g.vit = std::move(vit.grads);
      break;
    }
    case Variant::seq_bilstm_then_vit: {
      auto vit = vit_se_block_backward(p.vit, cache.vit, dfeat);
      auto lstm = bilstm_backward(p.lstm, cache.lstm, vit.input_grad);
      g.lstm = std::move(lstm.grads);
      g.vit = std::move(vit.grads);
      break;
    }
    case Variant::parallel_h32:
    case Variant::parallel_h64: {
      const Index vit_width = s.steps * s.embed;
      auto vit = vit_se_block_backward(p.vit, cache.vit, dfeat.leftCols(vit_width));
      auto lstm = bilstm_backward(p.lstm, cache.lstm, dfeat.rightCols(dfeat.cols() - vit_width));
      g.lstm = std::move(lstm.grads);
      g.vit = std::move(vit.grads);
      break;
    }
  }
  return g;
}

std::vector<int> argmax_rows(const RowMatrixd& scores) {
  std::vector<int> out(static_cast<std::size_t>(scores.rows()));
  for (Index r = 0; r < scores.rows(); ++r) {
    Index best = 0;
    for (Index c = 1; c < scores.cols(); ++c) {
      if (scores(r, c) > scores(r, best)) best = c;
    }
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

std::vector<int> predict(const Model& m, const Tensor3d& x) {
  return argmax_rows(forward(m, x).probs);
}

}  // namespace sevit
