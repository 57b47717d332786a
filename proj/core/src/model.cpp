#include "cstseld/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cstseld/nn.hpp"

namespace cst {

PoolingProfile pooling_profile_from_string(const std::string& s) {
  std::string t = s;
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "front") return PoolingProfile::kFront;
  if (t == "middle") return PoolingProfile::kMiddle;
  if (t == "end") return PoolingProfile::kEnd;
  throw ConfigError("unknown pooling profile '" + s + "' (front|middle|end)");
}

std::string to_string(PoolingProfile p) {
  switch (p) {
    case PoolingProfile::kFront: return "front";
    case PoolingProfile::kMiddle: return "middle";
    case PoolingProfile::kEnd: return "end";
  }
  return "front";
}

std::array<UleKernel, 3> ModelConfig::encoder_pools() const {
  switch (pooling) {
    case PoolingProfile::kFront: return {UleKernel{5, 2}, UleKernel{1, 2}, UleKernel{1, 1}};
    case PoolingProfile::kMiddle: return {UleKernel{1, 1}, UleKernel{1, 2}, UleKernel{5, 2}};
    case PoolingProfile::kEnd: return {UleKernel{1, 1}, UleKernel{1, 2}, UleKernel{1, 2}};
  }
  return {};
}

void ModelConfig::encoder_dims(std::int64_t frames, std::int64_t& t_out,
                               std::int64_t& f_out) const {
  t_out = frames;
  f_out = mel_bands;
  for (const auto& p : encoder_pools()) {
    t_out /= p.pt;
    f_out /= p.pf;
  }
}

std::int64_t ModelConfig::output_frames(std::int64_t frames) const {
  std::int64_t t = 0, f = 0;
  encoder_dims(frames, t, f);
  return fc_time_pool() ? t / 5 : t;
}

std::vector<UleKernel> ModelConfig::resolved_ule_kernels() const {
  if (!ule_kernels.empty()) {
    if (static_cast<int>(ule_kernels.size()) != n_cst)
      throw ConfigError("ule_kernels must list one (P_T,P_F) per CST block (" +
                        std::to_string(n_cst) + ")");
    return ule_kernels;
  }
  std::vector<UleKernel> out;
  if (multiscale) {
    const std::vector<UleKernel> schedule{{25, 4}, {10, 4}, {5, 4}, {5, 2}};
    for (int i = 0; i < n_cst; ++i)
      out.push_back(i < static_cast<int>(schedule.size()) ? schedule[static_cast<std::size_t>(i)]
                                                          : schedule.back());
  } else {
    const UleKernel k = n_cst <= 2 ? UleKernel{10, 4} : UleKernel{25, 4};
    out.assign(static_cast<std::size_t>(n_cst), k);
  }
  return out;
}

void ModelConfig::validate(std::int64_t frames) const {
  if (frames < 0) frames = input_frames;
  if (channels <= 0) throw ConfigError("channels must be positive");
  if (n_cst <= 0) throw ConfigError("n_cst must be positive");
  if (heads <= 0) throw ConfigError("heads must be positive");
  if (n_classes <= 0 || n_tracks <= 0) throw ConfigError("n_classes/n_tracks must be positive");
  if (doa_dim != 3) throw ConfigError("doa_dim must be 3");
  if (fc_hidden <= 0) throw ConfigError("fc_hidden must be positive");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ConfigError("dropout_rate must be in [0,1)");
  if (attention_order.empty() || attention_order.size() > 3)
    throw ConfigError("attention_order must contain 1..3 of C,S,T");
  std::string seen;
  for (char ch : attention_order) {
    if (ch != 'C' && ch != 'S' && ch != 'T')
      throw ConfigError("attention_order may only contain C, S and T");
    if (seen.find(ch) != std::string::npos)
      throw ConfigError("attention_order must not repeat a domain");
    seen.push_back(ch);
  }

  std::int64_t t = frames, f = mel_bands;
  const auto pools = encoder_pools();
  for (std::size_t i = 0; i < pools.size(); ++i) {
    if (t % pools[i].pt != 0 || f % pools[i].pf != 0)
      throw ConfigError("ConvBlock " + std::to_string(i + 1) + " pooling (" +
                        std::to_string(pools[i].pt) + "," + std::to_string(pools[i].pf) +
                        ") does not divide (" + std::to_string(t) + "," + std::to_string(f) + ")");
    t /= pools[i].pt;
    f /= pools[i].pf;
  }
  if (fc_time_pool() && t % 5 != 0)
    throw ConfigError("FC-block time pooling (5,1) does not divide T'=" + std::to_string(t));

  const auto kernels = resolved_ule_kernels();
  if (attention_order.find('C') != std::string::npos) {
    for (std::size_t b = 0; b < kernels.size(); ++b) {
      if (t % kernels[b].pt != 0 || f % kernels[b].pf != 0)
        throw ConfigError("ULE kernel (" + std::to_string(kernels[b].pt) + "," +
                          std::to_string(kernels[b].pf) + ") does not divide (T',F')=(" +
                          std::to_string(t) + "," + std::to_string(f) + ") at CST block " +
                          std::to_string(b + 1));
    }
  }
}

// ---- Parameters ------------------------------------------------------------

template <typename T>
Tensor<T>& Parameters<T>::add(const std::string& name, Tensor<T> tensor, bool trainable) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  tensor.set_requires_grad(trainable);
  index_[name] = entries_.size();
  entries_.push_back(Entry{name, std::move(tensor), trainable});
  return entries_.back().tensor;
}

template <typename T>
Tensor<T>& Parameters<T>::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return entries_[it->second].tensor;
}

template <typename T>
const Tensor<T>& Parameters<T>::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return entries_[it->second].tensor;
}

template <typename T>
std::int64_t Parameters<T>::total_elements() const {
  std::int64_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

template <typename T>
void Parameters<T>::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

const AttentionCapture::Map* AttentionCapture::find(int block, char domain) const {
  for (const auto& m : maps)
    if (m.block == block && m.domain == domain) return &m;
  return nullptr;
}

// ---- MHSA -------------------------------------------------------------------

std::int64_t mhsa_head_dim(std::int64_t embed_dim, int heads) {
  // Full-width heads when the embedding does not split evenly (ULE local
  // dims like 100 or 40 with 8 heads).
  return embed_dim % heads == 0 ? embed_dim / heads : embed_dim;
}

template <typename T>
Tensor<T> multi_head_self_attention(const Tensor<T>& x, const Tensor<T>& wq, const Tensor<T>& wk,
                                    const Tensor<T>& wv, const Tensor<T>& wo, int heads,
                                    AttentionCapture::Map* map_out) {
  if (x.rank() != 3) throw ConfigError("mhsa: expected [batch, seq, embed]");
  const std::int64_t B = x.dim(0), S = x.dim(1), D = x.dim(2);
  const std::int64_t Dh = mhsa_head_dim(D, heads);
  const std::int64_t H = heads;
  if (wq.dim(0) != D || wq.dim(1) != H * Dh || wo.dim(0) != H * Dh || wo.dim(1) != D)
    throw ConfigError("mhsa: projection shapes do not match embed/head layout");

  auto split_heads = [&](const Tensor<T>& t) {
    return reshape(permute(reshape(t, Shape{B, S, H, Dh}), {0, 2, 1, 3}), Shape{B * H, S, Dh});
  };
  auto q = split_heads(matmul(x, wq));
  auto k = split_heads(matmul(x, wk));
  auto v = split_heads(matmul(x, wv));

  auto logits = scale(matmul(q, k, false, true), static_cast<T>(1.0 / std::sqrt(static_cast<double>(Dh))));
  auto attn = softmax_last(logits);  // [B*H, S, S]
  if (map_out) {
    map_out->shape = Shape{B, H, S, S};
    map_out->values.assign(attn.values().begin(), attn.values().end());
  }
  auto ctx = matmul(attn, v);  // [B*H, S, Dh]
  ctx = reshape(permute(reshape(ctx, Shape{B, H, S, Dh}), {0, 2, 1, 3}), Shape{B, S, H * Dh});
  return matmul(ctx, wo);
}

// ---- CstFormer ---------------------------------------------------------------

namespace {

template <typename T>
Tensor<T> layer_norm_channels(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta) {
  // [B,C,T,F]: normalize across C per (t,f) position
  auto h = permute(x, {0, 2, 3, 1});
  h = layer_norm_last(h, gamma, beta);
  return permute(h, {0, 3, 1, 2});
}

}  // namespace

template <typename T>
CstFormer<T>::CstFormer(ModelConfig cfg, unsigned init_seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::mt19937_64 rng(init_seed);
  const std::int64_t C = cfg_.channels;

  auto add_bn = [&](const std::string& prefix, std::int64_t ch) {
    params_.add(prefix + ".gamma", Tensor<T>::full(Shape{ch}, T(1)));
    params_.add(prefix + ".beta", Tensor<T>(Shape{ch}));
    params_.add(prefix + ".mean", Tensor<T>(Shape{ch}), /*trainable=*/false);
    params_.add(prefix + ".var", Tensor<T>::full(Shape{ch}, T(1)), /*trainable=*/false);
  };
  auto add_ln = [&](const std::string& prefix, std::int64_t width) {
    params_.add(prefix + ".gamma", Tensor<T>::full(Shape{width}, T(1)));
    params_.add(prefix + ".beta", Tensor<T>(Shape{width}));
  };

  std::int64_t in_ch = cfg_.input_channels;
  for (int i = 0; i < 3; ++i) {
    const std::string p = "enc" + std::to_string(i);
    params_.add(p + ".conv.w", he_uniform<T>(Shape{C, in_ch, 3, 3}, in_ch * 9, rng));
    params_.add(p + ".conv.b", Tensor<T>(Shape{C}));
    add_bn(p + ".bn", C);
    in_ch = C;
  }

  const auto kernels = cfg_.resolved_ule_kernels();
  for (int b = 0; b < cfg_.n_cst; ++b) {
    const std::string p = "cst" + std::to_string(b);
    params_.add(p + ".lpu.w", he_uniform<T>(Shape{C, 3, 3}, 9, rng));
    for (char domain : cfg_.attention_order) {
      const std::int64_t D = domain == 'C'
                                 ? kernels[static_cast<std::size_t>(b)].pt *
                                       kernels[static_cast<std::size_t>(b)].pf
                                 : C;
      const std::int64_t Dh = mhsa_head_dim(D, cfg_.heads);
      const std::string ap = p + (domain == 'C' ? ".catt" : domain == 'S' ? ".satt" : ".tatt");
      params_.add(ap + ".wq", he_uniform<T>(Shape{D, cfg_.heads * Dh}, D, rng));
      params_.add(ap + ".wk", he_uniform<T>(Shape{D, cfg_.heads * Dh}, D, rng));
      params_.add(ap + ".wv", he_uniform<T>(Shape{D, cfg_.heads * Dh}, D, rng));
      params_.add(ap + ".wo", he_uniform<T>(Shape{cfg_.heads * Dh, D}, cfg_.heads * Dh, rng));
      add_ln(ap + ".ln", C);
    }
    add_ln(p + ".irffn.ln", C);
    params_.add(p + ".irffn.expand.w", he_uniform<T>(Shape{4 * C, C, 1, 1}, C, rng));
    add_bn(p + ".irffn.expand.bn", 4 * C);
    params_.add(p + ".irffn.dw.w", he_uniform<T>(Shape{4 * C, 3, 3}, 9, rng));
    add_bn(p + ".irffn.dw.bn", 4 * C);
    params_.add(p + ".irffn.proj.w", he_uniform<T>(Shape{C, 4 * C, 1, 1}, 4 * C, rng));
    add_bn(p + ".irffn.proj.bn", C);
  }

  std::int64_t t_out = 0, f_out = 0;
  cfg_.encoder_dims(cfg_.input_frames, t_out, f_out);
  const std::int64_t fc_in = f_out * C;
  params_.add("fc0.w", he_uniform<T>(Shape{fc_in, cfg_.fc_hidden}, fc_in, rng));
  params_.add("fc0.b", Tensor<T>(Shape{cfg_.fc_hidden}));
  params_.add("fc1.w", he_uniform<T>(Shape{cfg_.fc_hidden, cfg_.output_width()}, cfg_.fc_hidden, rng));
  params_.add("fc1.b", Tensor<T>(Shape{cfg_.output_width()}));
}

template <typename T>
Tensor<T> CstFormer<T>::lpu(const Tensor<T>& z, int block) const {
  return add(depthwise_conv2d(z, params_.at("cst" + std::to_string(block) + ".lpu.w")), z);
}

template <typename T>
Tensor<T> CstFormer<T>::attention_sublayer(const Tensor<T>& z, int block, char domain, bool train,
                                           std::mt19937_64* rng, AttentionCapture* capture) const {
  const std::int64_t B = z.dim(0), C = z.dim(1), Tt = z.dim(2), F = z.dim(3);
  const std::string ap = "cst" + std::to_string(block) +
                         (domain == 'C' ? ".catt" : domain == 'S' ? ".satt" : ".tatt");
  const auto& wq = params_.at(ap + ".wq");
  const auto& wk = params_.at(ap + ".wk");
  const auto& wv = params_.at(ap + ".wv");
  const auto& wo = params_.at(ap + ".wo");

  AttentionCapture::Map map;
  AttentionCapture::Map* map_ptr = capture ? &map : nullptr;

  Tensor<T> att;
  if (domain == 'C') {
    const auto kernels = cfg_.resolved_ule_kernels();
    const auto [pt, pf] = kernels[static_cast<std::size_t>(block)];
    const std::int64_t gt = Tt / pt, gf = F / pf, dl = pt * pf;
    auto u = unfold(z, pt, pf);                       // [B, C*dl, gt, gf]
    u = reshape(u, Shape{B, C, dl, gt, gf});
    u = permute(u, {0, 3, 4, 1, 2});                  // [B, gt, gf, C, dl]
    u = reshape(u, Shape{B * gt * gf, C, dl});
    auto a = multi_head_self_attention(u, wq, wk, wv, wo, cfg_.heads, map_ptr);
    a = reshape(a, Shape{B, gt, gf, C, dl});
    a = permute(a, {0, 3, 4, 1, 2});                  // [B, C, dl, gt, gf]
    a = reshape(a, Shape{B, C * dl, gt, gf});
    att = fold(a, pt, pf);
  } else if (domain == 'S') {
    auto u = reshape(permute(z, {0, 2, 3, 1}), Shape{B * Tt, F, C});
    auto a = multi_head_self_attention(u, wq, wk, wv, wo, cfg_.heads, map_ptr);
    att = permute(reshape(a, Shape{B, Tt, F, C}), {0, 3, 1, 2});
  } else {
    auto u = reshape(permute(z, {0, 3, 2, 1}), Shape{B * F, Tt, C});
    auto a = multi_head_self_attention(u, wq, wk, wv, wo, cfg_.heads, map_ptr);
    att = permute(reshape(a, Shape{B, F, Tt, C}), {0, 3, 2, 1});
  }
  if (capture) {
    map.block = block;
    map.domain = domain;
    capture->maps.push_back(std::move(map));
  }

  auto h = add(att, z);
  if (train && cfg_.dropout_rate > 0.0) {
    if (!rng) throw ConfigError("train-mode forward needs a dropout rng");
    h = dropout(h, static_cast<T>(cfg_.dropout_rate), true, *rng);
  }
  return layer_norm_channels(h, params_.at(ap + ".ln.gamma"), params_.at(ap + ".ln.beta"));
}

template <typename T>
Tensor<T> CstFormer<T>::irffn(const Tensor<T>& z, int block, bool train) const {
  const std::string p = "cst" + std::to_string(block) + ".irffn";
  auto bn = [&](const Tensor<T>& x, const std::string& prefix) {
    return batch_norm2d(x, params_.at(prefix + ".gamma"), params_.at(prefix + ".beta"),
                        params_.at(prefix + ".mean"), params_.at(prefix + ".var"), train);
  };
  auto h = layer_norm_channels(z, params_.at(p + ".ln.gamma"), params_.at(p + ".ln.beta"));
  h = conv2d(h, params_.at(p + ".expand.w"), Tensor<T>{});
  h = bn(gelu(h), p + ".expand.bn");                       // [B, 4C, T', F']
  auto h2 = depthwise_conv2d(h, params_.at(p + ".dw.w"));
  h2 = bn(gelu(h2), p + ".dw.bn");
  h = add(h2, h);                                          // residual at 4C
  h = conv2d(h, params_.at(p + ".proj.w"), Tensor<T>{});
  h = bn(h, p + ".proj.bn");
  return add(h, z);
}

template <typename T>
Tensor<T> CstFormer<T>::forward(const Tensor<T>& x, bool train, std::mt19937_64* rng,
                                AttentionCapture* capture) const {
  if (x.rank() != 4 || x.dim(1) != cfg_.input_channels || x.dim(3) != cfg_.mel_bands)
    throw ConfigError("forward: expected input [B," + std::to_string(cfg_.input_channels) + ",T," +
                      std::to_string(cfg_.mel_bands) + "], got " + shape_to_string(x.shape()));
  cfg_.validate(x.dim(2));
  if (train && cfg_.dropout_rate > 0.0 && !rng)
    throw ConfigError("train-mode forward needs a dropout rng");

  auto drop = [&](Tensor<T> h) {
    if (train && cfg_.dropout_rate > 0.0)
      return dropout(h, static_cast<T>(cfg_.dropout_rate), true, *rng);
    return h;
  };

  auto h = x;
  const auto pools = cfg_.encoder_pools();
  for (int i = 0; i < 3; ++i) {
    const std::string p = "enc" + std::to_string(i);
    h = conv2d(h, params_.at(p + ".conv.w"), params_.at(p + ".conv.b"));
    h = batch_norm2d(h, params_.at(p + ".bn.gamma"), params_.at(p + ".bn.beta"),
                     params_.at(p + ".bn.mean"), params_.at(p + ".bn.var"), train);
    h = relu(h);
    const auto& pk = pools[static_cast<std::size_t>(i)];
    if (pk.pt > 1 || pk.pf > 1) h = max_pool2d(h, pk.pt, pk.pf);
    h = drop(h);
  }

  for (int b = 0; b < cfg_.n_cst; ++b) {
    h = lpu(h, b);
    for (char domain : cfg_.attention_order)
      h = attention_sublayer(h, b, domain, train, rng, capture);
    h = irffn(h, b, train);
  }

  // FC head: (T', F'*C) -> optional time pool (5,1) -> two FCs -> tanh
  const std::int64_t B = h.dim(0), C = h.dim(1), Tt = h.dim(2), F = h.dim(3);
  auto seq = reshape(permute(h, {0, 2, 1, 3}), Shape{B, Tt, C * F});
  if (cfg_.fc_time_pool()) {
    seq = reshape(seq, Shape{B, 1, Tt, C * F});
    seq = avg_pool2d(seq, 5, 1);
    seq = reshape(seq, Shape{B, Tt / 5, C * F});
  }
  seq = linear(seq, params_.at("fc0.w"), params_.at("fc0.b"));
  seq = linear(seq, params_.at("fc1.w"), params_.at("fc1.b"));
  return tanh_act(seq);
}

// ---- checkpoints --------------------------------------------------------------

std::string ule_kernels_to_string(const std::vector<UleKernel>& ks) {
  std::string out;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(ks[i].pt) + "x" + std::to_string(ks[i].pf);
  }
  return out;
}

std::vector<UleKernel> ule_kernels_from_string(const std::string& s) {
  std::vector<UleKernel> out;
  if (s.empty()) return out;
  std::istringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto x = item.find('x');
    if (x == std::string::npos) throw ConfigError("bad ULE kernel '" + item + "' (want PTxPF)");
    UleKernel k;
    try {
      k.pt = std::stoll(item.substr(0, x));
      k.pf = std::stoll(item.substr(x + 1));
    } catch (const std::exception&) {
      throw ConfigError("bad ULE kernel '" + item + "'");
    }
    out.push_back(k);
  }
  return out;
}

namespace {

template <typename T>
constexpr const char* dtype_name() {
  if constexpr (std::is_same_v<T, float>) return "f32";
  else return "f64";
}

void write_config_lines(std::ofstream& m, const ModelConfig& cfg) {
  m << "cfg channels " << cfg.channels << "\n";
  m << "cfg n_cst " << cfg.n_cst << "\n";
  m << "cfg pooling " << to_string(cfg.pooling) << "\n";
  m << "cfg multiscale " << (cfg.multiscale ? 1 : 0) << "\n";
  m << "cfg ule " << ule_kernels_to_string(cfg.resolved_ule_kernels()) << "\n";
  m << "cfg attention_order " << cfg.attention_order << "\n";
  m << "cfg heads " << cfg.heads << "\n";
  m << "cfg n_classes " << cfg.n_classes << "\n";
  m << "cfg n_tracks " << cfg.n_tracks << "\n";
  m << "cfg dropout_rate " << cfg.dropout_rate << "\n";
  m << "cfg doa_dim " << cfg.doa_dim << "\n";
  m << "cfg fc_hidden " << cfg.fc_hidden << "\n";
  m << "cfg input_frames " << cfg.input_frames << "\n";
  m << "cfg mel_bands " << cfg.mel_bands << "\n";
  m << "cfg input_channels " << cfg.input_channels << "\n";
}

struct ManifestData {
  std::string dtype;
  ModelConfig cfg;
  std::string payload;
  struct TensorLine {
    std::string name;
    Shape shape;
    std::int64_t offset = 0;
  };
  std::vector<TensorLine> tensors;
};

ManifestData read_manifest(const std::string& path) {
  std::ifstream m(path);
  if (!m) throw DataError("cannot open checkpoint manifest: " + path);
  std::string line;
  if (!std::getline(m, line) || line.rfind("cstseld-checkpoint", 0) != 0)
    throw DataError("not a cstseld checkpoint: " + path);
  ManifestData data;
  while (std::getline(m, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "dtype") {
      ss >> data.dtype;
    } else if (key == "payload") {
      ss >> data.payload;
    } else if (key == "cfg") {
      std::string name, value;
      ss >> name;
      std::getline(ss, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      auto& cfg = data.cfg;
      try {
        if (name == "channels") cfg.channels = std::stoll(value);
        else if (name == "n_cst") cfg.n_cst = std::stoi(value);
        else if (name == "pooling") cfg.pooling = pooling_profile_from_string(value);
        else if (name == "multiscale") cfg.multiscale = value == "1";
        else if (name == "ule") cfg.ule_kernels = ule_kernels_from_string(value);
        else if (name == "attention_order") cfg.attention_order = value;
        else if (name == "heads") cfg.heads = std::stoi(value);
        else if (name == "n_classes") cfg.n_classes = std::stoi(value);
        else if (name == "n_tracks") cfg.n_tracks = std::stoi(value);
        else if (name == "dropout_rate") cfg.dropout_rate = std::stod(value);
        else if (name == "doa_dim") cfg.doa_dim = std::stoi(value);
        else if (name == "fc_hidden") cfg.fc_hidden = std::stoll(value);
        else if (name == "input_frames") cfg.input_frames = std::stoll(value);
        else if (name == "mel_bands") cfg.mel_bands = std::stoll(value);
        else if (name == "input_channels") cfg.input_channels = std::stoll(value);
      } catch (const ConfigError&) {
        throw;
      } catch (const std::exception&) {
        throw DataError("malformed checkpoint cfg line: " + line);
      }
    } else if (key == "tensor") {
      ManifestData::TensorLine t;
      std::string dtype, shape_csv, trainable;
      ss >> t.name >> dtype >> shape_csv >> t.offset >> trainable;
      std::istringstream sh(shape_csv);
      std::string d;
      while (std::getline(sh, d, ',')) t.shape.push_back(std::stoll(d));
      data.tensors.push_back(std::move(t));
    }
  }
  if (data.dtype.empty() || data.payload.empty())
    throw DataError("checkpoint manifest missing dtype/payload: " + path);
  return data;
}

}  // namespace

template <typename T>
void save_checkpoint(const std::string& path, const CstFormer<T>& model,
                     const std::vector<std::pair<std::string, std::string>>& echo) {
  const std::string bin_path = path + ".bin";
  std::ofstream m(path);
  if (!m) throw DataError("cannot write checkpoint manifest: " + path);
  m << "cstseld-checkpoint 1\n";
  m << "dtype " << dtype_name<T>() << "\n";
  write_config_lines(m, model.config());
  for (const auto& [k, v] : echo) m << "# " << k << "=" << v << "\n";
  m << "payload " << std::filesystem::path(bin_path).filename().string() << "\n";

  std::ofstream b(bin_path, std::ios::binary);
  if (!b) throw DataError("cannot write checkpoint payload: " + bin_path);
  std::int64_t offset = 0;
  for (const auto& e : model.params().entries()) {
    std::string shape_csv;
    for (std::size_t i = 0; i < e.tensor.shape().size(); ++i) {
      if (i) shape_csv += ",";
      shape_csv += std::to_string(e.tensor.shape()[i]);
    }
    m << "tensor " << e.name << " " << dtype_name<T>() << " " << shape_csv << " " << offset << " "
      << (e.trainable ? 1 : 0) << "\n";
    b.write(reinterpret_cast<const char*>(e.tensor.data()),
            static_cast<std::streamsize>(e.tensor.numel() * sizeof(T)));
    offset += e.tensor.numel() * static_cast<std::int64_t>(sizeof(T));
  }
}

template <typename T>
CstFormer<T> load_checkpoint(const std::string& path) {
  auto data = read_manifest(path);
  if (data.dtype != dtype_name<T>())
    throw ConfigError("checkpoint dtype " + data.dtype + " does not match requested " +
                      dtype_name<T>());
  CstFormer<T> model(data.cfg, /*init_seed=*/0);

  const auto bin_path = (std::filesystem::path(path).parent_path() / data.payload).string();
  std::ifstream b(bin_path, std::ios::binary);
  if (!b) throw DataError("cannot open checkpoint payload: " + bin_path);

  std::size_t loaded = 0;
  for (const auto& t : data.tensors) {
    if (!model.params().contains(t.name))
      throw DataError("checkpoint tensor '" + t.name + "' not present in the model");
    auto& dst = model.params().at(t.name);
    if (dst.shape() != t.shape)
      throw DataError("checkpoint tensor '" + t.name + "' has shape " + shape_to_string(t.shape) +
                      ", model expects " + shape_to_string(dst.shape()));
    b.seekg(t.offset);
    b.read(reinterpret_cast<char*>(dst.data()),
           static_cast<std::streamsize>(dst.numel() * sizeof(T)));
    if (b.gcount() != static_cast<std::streamsize>(dst.numel() * sizeof(T)))
      throw DataError("checkpoint payload truncated at tensor '" + t.name + "'");
    ++loaded;
  }
  if (loaded != model.params().entries().size())
    throw DataError("checkpoint lists " + std::to_string(loaded) + " tensors, model has " +
                    std::to_string(model.params().entries().size()));
  return model;
}

std::string checkpoint_dtype(const std::string& path) { return read_manifest(path).dtype; }

ModelConfig checkpoint_config(const std::string& path) { return read_manifest(path).cfg; }

// ---- explicit instantiations ---------------------------------------------------

#define CST_INSTANTIATE_MODEL(T)                                                              \
  template class Parameters<T>;                                                               \
  template class CstFormer<T>;                                                                \
  template Tensor<T> multi_head_self_attention<T>(const Tensor<T>&, const Tensor<T>&,         \
                                                  const Tensor<T>&, const Tensor<T>&,         \
                                                  const Tensor<T>&, int,                      \
                                                  AttentionCapture::Map*);                    \
  template void save_checkpoint<T>(const std::string&, const CstFormer<T>&,                   \
                                   const std::vector<std::pair<std::string, std::string>>&);  \
  template CstFormer<T> load_checkpoint<T>(const std::string&);

CST_INSTANTIATE_MODEL(float)
CST_INSTANTIATE_MODEL(double)

#undef CST_INSTANTIATE_MODEL

}  // namespace cst
