#pragma once

#include <array>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cstseld/tensor.hpp"

namespace cst {

/// Where the encoder does its time-frequency pooling (Table layout of the
/// three ConvBlocks plus the optional FC-block time pooling).
enum class PoolingProfile { kFront, kMiddle, kEnd };

PoolingProfile pooling_profile_from_string(const std::string& s);
std::string to_string(PoolingProfile p);

struct UleKernel {
  std::int64_t pt = 1;
  std::int64_t pf = 1;
  bool operator==(const UleKernel&) const = default;
};

struct ModelConfig {
  std::int64_t channels = 64;  // encoder width C
  int n_cst = 2;
  PoolingProfile pooling = PoolingProfile::kFront;
  bool multiscale = false;
  /// Per-block ULE kernels; empty means "fill from the standard schedule
  /// for (n_cst, multiscale)".
  std::vector<UleKernel> ule_kernels;
  std::string attention_order = "CST";  // any non-empty subset/permutation of C,S,T
  int heads = 8;
  int n_classes = 13;
  int n_tracks = 3;
  double dropout_rate = 0.05;
  int doa_dim = 3;
  std::int64_t fc_hidden = 256;
  std::int64_t input_frames = 250;  // one 5 s training segment at 50 fps
  std::int64_t mel_bands = 64;
  std::int64_t input_channels = 7;

  /// ConvBlock max-pool kernels (time, freq) for the profile.
  std::array<UleKernel, 3> encoder_pools() const;
  bool fc_time_pool() const { return pooling == PoolingProfile::kEnd; }

  /// Encoder output dims for an input with `frames` time steps.
  void encoder_dims(std::int64_t frames, std::int64_t& t_out, std::int64_t& f_out) const;
  /// Multi-ACCDOA frames produced for an input with `frames` time steps.
  std::int64_t output_frames(std::int64_t frames) const;
  std::int64_t output_width() const {
    return static_cast<std::int64_t>(n_classes) * n_tracks * doa_dim;
  }

  /// ULE kernels actually used (fills the standard schedule when unset).
  std::vector<UleKernel> resolved_ule_kernels() const;

  /// Checks divisibility of every pooling stage and ULE kernel for the
  /// given input length (defaults to input_frames). Throws ConfigError.
  void validate(std::int64_t frames = -1) const;
};

/// Named weight collection. Registration order is fixed by construction so
/// checkpoints and optimizer state line up across runs.
template <typename T>
class Parameters {
 public:
  struct Entry {
    std::string name;
    Tensor<T> tensor;
    bool trainable = true;  // false for running statistics buffers
  };

  Tensor<T>& add(const std::string& name, Tensor<T> tensor, bool trainable = true);
  Tensor<T>& at(const std::string& name);
  const Tensor<T>& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  std::int64_t total_elements() const;
  void zero_grad();

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Attention maps recorded during a forward pass (values only).
struct AttentionCapture {
  struct Map {
    int block = 0;
    char domain = 'C';  // 'C', 'S' or 'T'
    Shape shape;        // [batch, heads, S, S]
    std::vector<double> values;
  };
  std::vector<Map> maps;

  const Map* find(int block, char domain) const;
};

/// The CST-former: ConvBlock encoder, n_cst CST blocks
/// (LPU -> attentions in configured order -> IRFFN) and the FC output head
/// projecting to multi-ACCDOA vectors.
template <typename T>
class CstFormer {
 public:
  CstFormer(ModelConfig cfg, unsigned init_seed);

  const ModelConfig& config() const { return cfg_; }
  Parameters<T>& params() { return params_; }
  const Parameters<T>& params() const { return params_; }

  /// x: [B, 7, T, F]. Returns [B, T_out, n_classes*n_tracks*doa_dim] with
  /// components in [-1, 1] (tanh head). `rng` is required when train is
  /// true and dropout_rate > 0.
  Tensor<T> forward(const Tensor<T>& x, bool train, std::mt19937_64* rng = nullptr,
                    AttentionCapture* capture = nullptr) const;

  // Individual CST-block stages, exposed for direct testing.
  Tensor<T> lpu(const Tensor<T>& z, int block) const;
  Tensor<T> attention_sublayer(const Tensor<T>& z, int block, char domain, bool train,
                               std::mt19937_64* rng, AttentionCapture* capture) const;
  Tensor<T> irffn(const Tensor<T>& z, int block, bool train) const;

 private:
  ModelConfig cfg_;
  mutable Parameters<T> params_;  // running stats update during train forward
};

/// Multi-head self attention over [batch, S, D]; per-head dim is D/heads
/// when divisible, otherwise each head spans the full embedding. wq/wk/wv
/// are [D, heads*head_dim], wo is [heads*head_dim, D]. Projections carry
/// no biases. Optionally emits the softmax maps as [batch, heads, S, S].
template <typename T>
Tensor<T> multi_head_self_attention(const Tensor<T>& x, const Tensor<T>& wq, const Tensor<T>& wk,
                                    const Tensor<T>& wv, const Tensor<T>& wo, int heads,
                                    AttentionCapture::Map* map_out = nullptr);

std::int64_t mhsa_head_dim(std::int64_t embed_dim, int heads);

// ---- checkpoints ---------------------------------------------------------

/// Text manifest `<path>` plus raw little-endian payload `<path>.bin`.
template <typename T>
void save_checkpoint(const std::string& path, const CstFormer<T>& model,
                     const std::vector<std::pair<std::string, std::string>>& echo = {});

template <typename T>
CstFormer<T> load_checkpoint(const std::string& path);

/// Peeks at the manifest without loading the payload.
std::string checkpoint_dtype(const std::string& path);
ModelConfig checkpoint_config(const std::string& path);

std::string ule_kernels_to_string(const std::vector<UleKernel>& ks);
std::vector<UleKernel> ule_kernels_from_string(const std::string& s);

}  // namespace cst
