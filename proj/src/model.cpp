#include "lmt/model.hpp"

#include <cmath>
#include <stdexcept>

#include "lmt/error.hpp"

namespace lmt {

void ModelConfig::validate() const {
  if (num_layers == 0) throw ConfigError("num_layers must be positive");
  if (num_heads == 0 || d_model == 0 || d_model % num_heads != 0) {
    throw ConfigError("d_model (" + std::to_string(d_model) + ") must be divisible by num_heads (" +
                      std::to_string(num_heads) + ")");
  }
  if (d_ff == 0) throw ConfigError("d_ff must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
  if (max_len < 2) throw ConfigError("max_len must be at least 2");
  if (vocab_size < 5) throw ConfigError("vocab_size must be at least 5");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0) throw ConfigError("label_smoothing must be in [0, 1)");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"num_layers", num_layers}, {"num_heads", num_heads},   {"d_model", d_model},
          {"d_ff", d_ff},             {"dropout", dropout},       {"max_len", max_len},
          {"vocab_size", vocab_size}, {"label_smoothing", label_smoothing}, {"tie_embeddings", tie_embeddings}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.num_layers = j.at("num_layers").get<std::size_t>();
  c.num_heads = j.at("num_heads").get<std::size_t>();
  c.d_model = j.at("d_model").get<std::size_t>();
  c.d_ff = j.at("d_ff").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.max_len = j.at("max_len").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.label_smoothing = j.at("label_smoothing").get<double>();
  c.tie_embeddings = j.at("tie_embeddings").get<bool>();
  c.validate();
  return c;
}

std::vector<ParamSpec> parameter_manifest(const ModelConfig& c) {
  c.validate();
  const std::size_t d = c.d_model;
  std::vector<ParamSpec> out;
  auto attn = [&](const std::string& p) {
    for (const char* w : {"q", "k", "v", "o"}) {
      out.push_back({p + ".w" + w, {d, d}, ParamInit::xavier_uniform, true});
      out.push_back({p + ".b" + w, {d}, ParamInit::zeros, false});
    }
  };
  auto norm = [&](const std::string& p) {
    out.push_back({p + ".gain", {d}, ParamInit::ones, false});
    out.push_back({p + ".bias", {d}, ParamInit::zeros, false});
  };
  auto ffn = [&](const std::string& p) {
    out.push_back({p + ".w1", {d, c.d_ff}, ParamInit::xavier_uniform, true});
    out.push_back({p + ".b1", {c.d_ff}, ParamInit::zeros, false});
    out.push_back({p + ".w2", {c.d_ff, d}, ParamInit::xavier_uniform, true});
    out.push_back({p + ".b2", {d}, ParamInit::zeros, false});
  };
  if (c.tie_embeddings) {
    out.push_back({"embedding", {c.vocab_size, d}, ParamInit::embedding_normal, false});
  } else {
    out.push_back({"src_embedding", {c.vocab_size, d}, ParamInit::embedding_normal, false});
    out.push_back({"tgt_embedding", {c.vocab_size, d}, ParamInit::embedding_normal, false});
    out.push_back({"output_projection", {d, c.vocab_size}, ParamInit::xavier_uniform, true});
  }
  for (std::size_t i = 0; i < c.num_layers; ++i) {
    const std::string p = "encoder." + std::to_string(i);
    norm(p + ".ln1");
    attn(p + ".self_attn");
    norm(p + ".ln2");
    ffn(p + ".ffn");
  }
  norm("encoder.final_ln");
  for (std::size_t i = 0; i < c.num_layers; ++i) {
    const std::string p = "decoder." + std::to_string(i);
    norm(p + ".ln1");
    attn(p + ".self_attn");
    norm(p + ".ln2");
    attn(p + ".cross_attn");
    norm(p + ".ln3");
    ffn(p + ".ffn");
  }
  norm("decoder.final_ln");
  return out;
}

std::size_t count_parameters(const ModelConfig& config) {
  std::size_t total = 0;
  for (const auto& entry : parameter_manifest(config)) total += numel(entry.shape);
  return total;
}

std::vector<double> sinusoidal_positions(std::size_t len, std::size_t d_model) {
  std::vector<double> pe(len * d_model);
  for (std::size_t pos = 0; pos < len; ++pos) {
    for (std::size_t i = 0; i < d_model; i += 2) {
      const double angle = static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d_model));
      pe[pos * d_model + i] = std::sin(angle);
      if (i + 1 < d_model) pe[pos * d_model + i + 1] = std::cos(angle);
    }
  }
  return pe;
}

template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::span<const std::uint8_t> mask) {
  if (q.rank() != 4 || k.rank() != 4 || v.rank() != 4) throw ShapeError("attention expects rank-4 q, k, v");
  const std::size_t dk = q.dim(3);
  const Tensor<T> scores = scale(matmul(q, permute(k, {0, 1, 3, 2})), T(1.0 / std::sqrt(static_cast<double>(dk))));
  const Tensor<T> weights = softmax(masked_add(scores, mask, T(-1e9)), 3);
  return matmul(weights, v);
}

template <typename T>
typename TransformerModel<T>::EncoderOutput TransformerModel<T>::EncoderOutput::repeat(std::size_t times) const {
  if (batch != 1) throw ShapeError("EncoderOutput::repeat needs a single-row encoding");
  EncoderOutput out;
  out.batch = times;
  out.source_len = source_len;
  const auto src = memory.data();
  std::vector<T> data;
  data.reserve(src.size() * times);
  for (std::size_t i = 0; i < times; ++i) {
    data.insert(data.end(), src.begin(), src.end());
    out.source_mask.insert(out.source_mask.end(), source_mask.begin(), source_mask.end());
  }
  out.memory = Tensor<T>({times, source_len, memory.dim(2)}, std::move(data));
  return out;
}

template <typename T>
TransformerModel<T>::TransformerModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  Rng rng(seed);
  for (const auto& entry : parameter_manifest(config_)) {
    std::vector<T> data(numel(entry.shape));
    switch (entry.init) {
      case ParamInit::xavier_uniform: {
        const double bound = std::sqrt(6.0 / static_cast<double>(entry.shape[0] + entry.shape[1]));
        for (auto& x : data) x = T(rng.uniform(-bound, bound));
        break;
      }
      case ParamInit::embedding_normal: {
        const double sd = 1.0 / std::sqrt(static_cast<double>(config_.d_model));
        for (auto& x : data) x = T(rng.normal(0.0, sd));
        break;
      }
      case ParamInit::zeros: break;
      case ParamInit::ones:
        for (auto& x : data) x = T(1);
        break;
    }
    index_[entry.name] = params_.size();
    params_.push_back({entry.name, Tensor<T>(entry.shape, std::move(data), true), entry.decay});
  }

  auto p = [&](const std::string& name) { return parameter(name); };
  auto attn = [&](const std::string& pre) {
    return Attn{p(pre + ".wq"), p(pre + ".bq"), p(pre + ".wk"), p(pre + ".bk"),
                p(pre + ".wv"), p(pre + ".bv"), p(pre + ".wo"), p(pre + ".bo")};
  };
  auto norm = [&](const std::string& pre) { return Norm{p(pre + ".gain"), p(pre + ".bias")}; };
  auto ffn = [&](const std::string& pre) {
    return FeedForward{p(pre + ".w1"), p(pre + ".b1"), p(pre + ".w2"), p(pre + ".b2")};
  };
  if (config_.tie_embeddings) {
    src_embedding_ = tgt_embedding_ = p("embedding");
  } else {
    src_embedding_ = p("src_embedding");
    tgt_embedding_ = p("tgt_embedding");
    output_projection_ = p("output_projection");
  }
  for (std::size_t i = 0; i < config_.num_layers; ++i) {
    const std::string pre = "encoder." + std::to_string(i);
    encoder_.push_back({attn(pre + ".self_attn"), norm(pre + ".ln1"), norm(pre + ".ln2"), ffn(pre + ".ffn")});
  }
  encoder_norm_ = norm("encoder.final_ln");
  for (std::size_t i = 0; i < config_.num_layers; ++i) {
    const std::string pre = "decoder." + std::to_string(i);
    decoder_.push_back({attn(pre + ".self_attn"), attn(pre + ".cross_attn"), norm(pre + ".ln1"), norm(pre + ".ln2"),
                        norm(pre + ".ln3"), ffn(pre + ".ffn")});
  }
  decoder_norm_ = norm("decoder.final_ln");
}

template <typename T>
Tensor<T> TransformerModel<T>::parameter(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
  return params_[it->second].tensor;
}

template <typename T>
void TransformerModel<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template <typename T>
Tensor<T> TransformerModel<T>::drop(const Tensor<T>& x, bool training, Rng* rng) const {
  if (!training || rng == nullptr) return x;
  return dropout(x, config_.dropout, *rng, true);
}

template <typename T>
Tensor<T> TransformerModel<T>::embed(const Tensor<T>& table, const TokenMatrix& ids, bool training, Rng* rng) const {
  if (ids.cols > config_.max_len) {
    throw ShapeError("sequence length " + std::to_string(ids.cols) + " exceeds max_len " + std::to_string(config_.max_len));
  }
  const std::size_t d = config_.d_model;
  const Tensor<T> tokens = scale(embedding(table, std::span<const TokenId>(ids.ids), {ids.rows, ids.cols}),
                                 T(std::sqrt(static_cast<double>(d))));
  const auto pe = sinusoidal_positions(ids.cols, d);
  std::vector<T> positions(ids.rows * ids.cols * d);
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = T(pe[i % (ids.cols * d)]);
  return drop(add(tokens, Tensor<T>({ids.rows, ids.cols, d}, std::move(positions))), training, rng);
}

template <typename T>
Tensor<T> TransformerModel<T>::multi_head(const Attn& a, const Tensor<T>& query, const Tensor<T>& kv,
                                          std::span<const std::uint8_t> mask) const {
  const std::size_t B = query.dim(0);
  const std::size_t Tq = query.dim(1);
  const std::size_t Tk = kv.dim(1);
  const std::size_t h = config_.num_heads;
  const std::size_t dk = config_.head_dim();
  const std::size_t d = config_.d_model;
  auto split_heads = [&](const Tensor<T>& x, std::size_t len) {
    return permute(reshape(x, {B, len, h, dk}), {0, 2, 1, 3});
  };
  const Tensor<T> q = split_heads(add_bias(matmul(query, a.wq), a.bq), Tq);
  const Tensor<T> k = split_heads(add_bias(matmul(kv, a.wk), a.bk), Tk);
  const Tensor<T> v = split_heads(add_bias(matmul(kv, a.wv), a.bv), Tk);
  const Tensor<T> heads = attention(q, k, v, mask);
  const Tensor<T> merged = reshape(permute(heads, {0, 2, 1, 3}), {B, Tq, d});
  return add_bias(matmul(merged, a.wo), a.bo);
}

template <typename T>
Tensor<T> TransformerModel<T>::feed_forward(const FeedForward& f, const Tensor<T>& x) const {
  return add_bias(matmul(relu(add_bias(matmul(x, f.w1), f.b1)), f.w2), f.b2);
}

template <typename T>
typename TransformerModel<T>::EncoderOutput TransformerModel<T>::encode(const TokenMatrix& source,
                                                                        std::span<const std::uint8_t> source_mask,
                                                                        bool training, Rng* rng) const {
  const std::size_t B = source.rows;
  const std::size_t S = source.cols;
  if (source_mask.size() != B * S) throw ShapeError("source mask does not match source ids");
  std::vector<std::uint8_t> self_mask(B * S * S);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t i = 0; i < S; ++i) {
      for (std::size_t j = 0; j < S; ++j) self_mask[(b * S + i) * S + j] = source_mask[b * S + j];
    }
  }
  Tensor<T> x = embed(src_embedding_, source, training, rng);
  for (const auto& layer : encoder_) {
    const Tensor<T> n1 = layer_norm(x, layer.ln1.gain, layer.ln1.bias);
    x = add(x, drop(multi_head(layer.self_attn, n1, n1, self_mask), training, rng));
    const Tensor<T> n2 = layer_norm(x, layer.ln2.gain, layer.ln2.bias);
    x = add(x, drop(feed_forward(layer.ffn, n2), training, rng));
  }
  EncoderOutput out;
  out.memory = layer_norm(x, encoder_norm_.gain, encoder_norm_.bias);
  out.source_mask.assign(source_mask.begin(), source_mask.end());
  out.batch = B;
  out.source_len = S;
  return out;
}

template <typename T>
Tensor<T> TransformerModel<T>::decode(const EncoderOutput& encoded, const TokenMatrix& target,
                                      std::span<const std::uint8_t> target_mask, bool training, Rng* rng) const {
  const std::size_t B = target.rows;
  const std::size_t Tt = target.cols;
  const std::size_t S = encoded.source_len;
  if (encoded.batch != B) throw ShapeError("decoder batch does not match encoder batch");
  if (target_mask.size() != B * Tt) throw ShapeError("target mask does not match target ids");
  std::vector<std::uint8_t> self_mask(B * Tt * Tt);
  std::vector<std::uint8_t> cross_mask(B * Tt * S);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t i = 0; i < Tt; ++i) {
      for (std::size_t j = 0; j < Tt; ++j) self_mask[(b * Tt + i) * Tt + j] = (j <= i && target_mask[b * Tt + j]) ? 1 : 0;
      for (std::size_t j = 0; j < S; ++j) cross_mask[(b * Tt + i) * S + j] = encoded.source_mask[b * S + j];
    }
  }
  Tensor<T> y = embed(tgt_embedding_, target, training, rng);
  for (const auto& layer : decoder_) {
    const Tensor<T> n1 = layer_norm(y, layer.ln1.gain, layer.ln1.bias);
    y = add(y, drop(multi_head(layer.self_attn, n1, n1, self_mask), training, rng));
    const Tensor<T> n2 = layer_norm(y, layer.ln2.gain, layer.ln2.bias);
    y = add(y, drop(multi_head(layer.cross_attn, n2, encoded.memory, cross_mask), training, rng));
    const Tensor<T> n3 = layer_norm(y, layer.ln3.gain, layer.ln3.bias);
    y = add(y, drop(feed_forward(layer.ffn, n3), training, rng));
  }
  const Tensor<T> out = layer_norm(y, decoder_norm_.gain, decoder_norm_.bias);
  if (config_.tie_embeddings) {
    // Tied projection is rescaled by 1/sqrt(d_model) to mirror the input scaling.
    const T s = T(1.0 / std::sqrt(static_cast<double>(config_.d_model)));
    return matmul(scale(out, s), permute(tgt_embedding_, {1, 0}));
  }
  return matmul(out, output_projection_);
}

template <typename T>
Tensor<T> TransformerModel<T>::forward(const TokenMatrix& source, std::span<const std::uint8_t> source_mask,
                                       const TokenMatrix& target, std::span<const std::uint8_t> target_mask,
                                       bool training, Rng* rng) const {
  return decode(encode(source, source_mask, training, rng), target, target_mask, training, rng);
}

template class TransformerModel<float>;
template class TransformerModel<double>;
template Tensor<float> attention(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                                 std::span<const std::uint8_t>);
template Tensor<double> attention(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                                  std::span<const std::uint8_t>);

}  // namespace lmt
