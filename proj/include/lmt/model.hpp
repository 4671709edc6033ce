#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lmt/corpus.hpp"
#include "lmt/rng.hpp"
#include "lmt/tensor.hpp"

namespace lmt {

/// Hyperparameters of the encoder-decoder Transformer. Defaults are the
/// compact 4-layer, 8-head, 128-wide configuration.
struct ModelConfig {
  std::size_t num_layers = 4;
  std::size_t num_heads = 8;
  std::size_t d_model = 128;
  std::size_t d_ff = 512;
  double dropout = 0.1;
  std::size_t max_len = 256;
  std::size_t vocab_size = 32000;
  double label_smoothing = 0.1;
  bool tie_embeddings = true;

  /// Throws ConfigError.
  void validate() const;
  std::size_t head_dim() const { return d_model / num_heads; }

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class ParamInit { xavier_uniform, embedding_normal, zeros, ones };

struct ParamSpec {
  std::string name;
  Shape shape;
  ParamInit init;
  /// Subject to decoupled weight decay (projection matrices only).
  bool decay;
};

/// Every parameter tensor in creation order.
std::vector<ParamSpec> parameter_manifest(const ModelConfig& config);
std::size_t count_parameters(const ModelConfig& config);

template <typename T>
struct NamedParameter {
  std::string name;
  Tensor<T> tensor;
  bool decay;
};

/// softmax(q k^T / sqrt(dk) + penalty) v with penalty -1e9 where mask[B,1,Tq,Tk] == 0.
template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::span<const std::uint8_t> mask);

/// Sinusoidal position table [len, d_model].
std::vector<double> sinusoidal_positions(std::size_t len, std::size_t d_model);

template <typename T>
class TransformerModel {
 public:
  struct EncoderOutput {
    Tensor<T> memory;  // [B, Ts, d_model]
    std::vector<std::uint8_t> source_mask;
    std::size_t batch = 0;
    std::size_t source_len = 0;

    /// Copies a single-row encoding `times` times (for beam expansion).
    EncoderOutput repeat(std::size_t times) const;
  };

  TransformerModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  std::vector<NamedParameter<T>>& parameters() { return params_; }
  const std::vector<NamedParameter<T>>& parameters() const { return params_; }
  /// Throws std::out_of_range for unknown names.
  Tensor<T> parameter(const std::string& name) const;
  void zero_grad();

  /// Logits [B, T_tgt, V]. Dropout is applied only when `training` and rng != nullptr.
  Tensor<T> forward(const TokenMatrix& source, std::span<const std::uint8_t> source_mask, const TokenMatrix& target,
                    std::span<const std::uint8_t> target_mask, bool training = false, Rng* rng = nullptr) const;

  EncoderOutput encode(const TokenMatrix& source, std::span<const std::uint8_t> source_mask, bool training = false,
                       Rng* rng = nullptr) const;
  Tensor<T> decode(const EncoderOutput& encoded, const TokenMatrix& target, std::span<const std::uint8_t> target_mask,
                   bool training = false, Rng* rng = nullptr) const;

 private:
  struct Attn {
    Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
  };
  struct Norm {
    Tensor<T> gain, bias;
  };
  struct FeedForward {
    Tensor<T> w1, b1, w2, b2;
  };
  struct EncoderLayer {
    Attn self_attn;
    Norm ln1, ln2;
    FeedForward ffn;
  };
  struct DecoderLayer {
    Attn self_attn, cross_attn;
    Norm ln1, ln2, ln3;
    FeedForward ffn;
  };

  Tensor<T> embed(const Tensor<T>& table, const TokenMatrix& ids, bool training, Rng* rng) const;
  Tensor<T> multi_head(const Attn& a, const Tensor<T>& query, const Tensor<T>& kv, std::span<const std::uint8_t> mask) const;
  Tensor<T> feed_forward(const FeedForward& f, const Tensor<T>& x) const;
  Tensor<T> drop(const Tensor<T>& x, bool training, Rng* rng) const;

  ModelConfig config_;
  std::vector<NamedParameter<T>> params_;
  std::map<std::string, std::size_t> index_;
  Tensor<T> src_embedding_, tgt_embedding_, output_projection_;
  std::vector<EncoderLayer> encoder_;
  std::vector<DecoderLayer> decoder_;
  Norm encoder_norm_, decoder_norm_;
};

}  // namespace lmt
