#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "thermofuse/engine/checkpoint.hpp"
#include "thermofuse/engine/ops.hpp"
#include "thermofuse/engine/optim.hpp"
#include "thermofuse/engine/tensor.hpp"
#include "thermofuse/errors.hpp"
#include "thermofuse/rng.hpp"
#include "thermofuse/sequence_io.hpp"

namespace thermofuse {

// Dual-encoder attention-fusion segmentation network. Two residual-conv
// encoders (one per modality tensor) meet through per-level sigmoid fusion
// gates; a gated decoder climbs back to full resolution; a 1x1 head emits
// either C-class logits or a binary logit plus a bounded depth map.
struct ModelConfig {
  int levels = 5;
  std::vector<int> filters = {64, 128, 256, 512, 1024};
  int kernel = 3;
  int pca_channels = 10;
  int tsr_channels = 6;
  std::string head = "multiclass";   // or "binary_depth"
  int num_classes = 5;               // multiclass head, background included
  double depth_max_mm = 2.5;         // binary_depth head output bound
  double lambda = 0.5;               // depth-term weight in the joint loss
  std::string fusion = "attention";  // or "concat" (ablation arm)

  void validate() const {
    if (levels < 1) throw ConfigError("model: levels must be >= 1");
    if (static_cast<int>(filters.size()) != levels)
      throw ConfigError("model: filters list length must equal levels");
    for (int f : filters)
      if (f < 1) throw ConfigError("model: filter counts must be positive");
    if (kernel < 1 || kernel % 2 == 0)
      throw ConfigError("model: kernel size must be odd and positive");
    if (pca_channels < 1 || tsr_channels < 1)
      throw ConfigError("model: modality channel counts must be positive");
    if (head != "multiclass" && head != "binary_depth")
      throw ConfigError("model: head must be multiclass or binary_depth");
    if (head == "multiclass" && num_classes < 2)
      throw ConfigError("model: multiclass head needs at least 2 classes");
    if (depth_max_mm <= 0.0) throw ConfigError("model: depth_max_mm must be positive");
    if (lambda < 0.0) throw ConfigError("model: lambda must be >= 0");
    if (fusion != "attention" && fusion != "concat")
      throw ConfigError("model: fusion must be attention or concat");
  }
};

inline void to_json(ordered_json& j, const ModelConfig& c) {
  j["levels"] = c.levels;
  j["filters"] = c.filters;
  j["kernel"] = c.kernel;
  j["pca_channels"] = c.pca_channels;
  j["tsr_channels"] = c.tsr_channels;
  j["head"] = c.head;
  j["num_classes"] = c.num_classes;
  j["depth_max_mm"] = c.depth_max_mm;
  j["lambda"] = c.lambda;
  j["fusion"] = c.fusion;
}

inline ModelConfig model_config_from_json(const ordered_json& j) {
  ModelConfig c;
  if (j.contains("levels")) c.levels = j["levels"].get<int>();
  if (j.contains("filters")) c.filters = j["filters"].get<std::vector<int>>();
  if (j.contains("kernel")) c.kernel = j["kernel"].get<int>();
  if (j.contains("pca_channels")) c.pca_channels = j["pca_channels"].get<int>();
  if (j.contains("tsr_channels")) c.tsr_channels = j["tsr_channels"].get<int>();
  if (j.contains("head")) c.head = j["head"].get<std::string>();
  if (j.contains("num_classes")) c.num_classes = j["num_classes"].get<int>();
  if (j.contains("depth_max_mm")) c.depth_max_mm = j["depth_max_mm"].get<double>();
  if (j.contains("lambda")) c.lambda = j["lambda"].get<double>();
  if (j.contains("fusion")) c.fusion = j["fusion"].get<std::string>();
  c.validate();
  return c;
}

struct ConvWeights {
  Parameter kernel, bias;
};

inline Tensor apply_conv(const Tensor& x, const ConvWeights& w) {
  return conv2d(x, w.kernel.tensor, w.bias.tensor);
}

struct BlockWeights {
  ConvWeights c1, c2;
  bool projected = false;  // 1x1 shortcut when channel counts differ
  ConvWeights shortcut;
};

struct Predictions {
  Tensor class_logits;   // multiclass: (B, C, H, W)
  Tensor binary_logits;  // binary_depth: (B, 1, H, W)
  Tensor depth_mm;       // binary_depth: (B, 1, H, W), bounded [0, depth_max]
};

class FusionNet {
 public:
  FusionNet(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(mix_seed(seed, 0x6d6f64656c));
    const int M = cfg_.levels;
    enc_pca.reserve(static_cast<std::size_t>(M));
    enc_tsr.reserve(static_cast<std::size_t>(M));
    for (int m = 0; m < M; ++m)
      enc_pca.push_back(make_block("enc_pca.l" + std::to_string(m + 1),
                                   m == 0 ? cfg_.pca_channels : cfg_.filters[static_cast<std::size_t>(m) - 1],
                                   cfg_.filters[static_cast<std::size_t>(m)], cfg_.kernel, rng));
    for (int m = 0; m < M; ++m)
      enc_tsr.push_back(make_block("enc_tsr.l" + std::to_string(m + 1),
                                   m == 0 ? cfg_.tsr_channels : cfg_.filters[static_cast<std::size_t>(m) - 1],
                                   cfg_.filters[static_cast<std::size_t>(m)], cfg_.kernel, rng));
    for (int m = 0; m < M; ++m) {
      const int c = cfg_.filters[static_cast<std::size_t>(m)];
      const std::string base = "fuse.l" + std::to_string(m + 1);
      if (attention())
        gates.push_back(make_conv(base + ".gate", c, c, 1, rng));
      else
        gates.push_back(make_conv(base + ".reduce", 2 * c, c, 1, rng));
    }
    for (int m = 0; m < M - 1; ++m) {
      const int c_up = cfg_.filters[static_cast<std::size_t>(m) + 1];  // decoder state arriving from below
      const int c_here = cfg_.filters[static_cast<std::size_t>(m)];
      const std::string base = "dec.l" + std::to_string(m + 1);
      if (attention()) {
        const int c_att = std::max(1, c_here / 2);
        dec_d.push_back(make_conv(base + ".d", c_up, c_att, 1, rng));
        dec_f.push_back(make_conv(base + ".f", c_here, c_att, 1, rng));
        dec_psi.push_back(make_conv(base + ".psi", c_att, 1, 1, rng));
        dec_post.push_back(make_block(base + ".post", c_up, c_here, cfg_.kernel, rng));
      } else {
        dec_reduce.push_back(make_conv(base + ".reduce", c_up + c_here, c_here, 1, rng));
      }
    }
    const int c_head = cfg_.filters[0];
    if (cfg_.head == "multiclass") {
      head_class = make_conv("head.class", c_head, cfg_.num_classes, 1, rng);
    } else {
      head_binary = make_conv("head.binary", c_head, 1, 1, rng);
      head_depth = make_conv("head.depth", c_head, 1, 1, rng);
    }
  }

  const ModelConfig& config() const { return cfg_; }
  bool attention() const { return cfg_.fusion == "attention"; }

  // Stable order: encoders, fusion gates, decoder, head; creation order.
  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    auto push_conv = [&](ConvWeights& c) {
      out.push_back(&c.kernel);
      out.push_back(&c.bias);
    };
    auto push_block = [&](BlockWeights& b) {
      push_conv(b.c1);
      push_conv(b.c2);
      if (b.projected) push_conv(b.shortcut);
    };
    for (auto& b : enc_pca) push_block(b);
    for (auto& b : enc_tsr) push_block(b);
    for (auto& c : gates) push_conv(c);
    if (attention()) {
      for (std::size_t m = 0; m < dec_d.size(); ++m) {
        push_conv(dec_d[m]);
        push_conv(dec_f[m]);
        push_conv(dec_psi[m]);
        push_block(dec_post[m]);
      }
    } else {
      for (auto& c : dec_reduce) push_conv(c);
    }
    if (cfg_.head == "multiclass") {
      push_conv(head_class);
    } else {
      push_conv(head_binary);
      push_conv(head_depth);
    }
    return out;
  }

  std::vector<const Parameter*> parameters() const {
    auto mutable_list = const_cast<FusionNet*>(this)->parameters();
    return {mutable_list.begin(), mutable_list.end()};
  }

  static Tensor residual_block(const Tensor& x, const BlockWeights& w) {
    const Tensor main = apply_conv(relu(apply_conv(x, w.c1)), w.c2);
    const Tensor shortcut = w.projected ? apply_conv(x, w.shortcut) : x;
    return relu(add(main, shortcut));
  }

  // Per-level feature stacks, index 0 at full resolution. Level 1 is a stem
  // (no pooling); each later level pools then convolves.
  std::vector<Tensor> encode_branch(const Tensor& x, const std::vector<BlockWeights>& blocks) const {
    const int div = 1 << (cfg_.levels - 1);
    if (x.shape().h % div != 0 || x.shape().w % div != 0)
      throw ShapeError("encode: spatial size " + x.shape().str() + " not divisible by " +
                       std::to_string(div));
    std::vector<Tensor> feats;
    feats.reserve(blocks.size());
    Tensor f = residual_block(x, blocks[0]);
    feats.push_back(f);
    for (std::size_t m = 1; m < blocks.size(); ++m) {
      f = residual_block(max_pool2(f), blocks[m]);
      feats.push_back(f);
    }
    return feats;
  }

  std::pair<std::vector<Tensor>, std::vector<Tensor>> encode(const Tensor& pca,
                                                             const Tensor& tsr) const {
    return {encode_branch(pca, enc_pca), encode_branch(tsr, enc_tsr)};
  }

  // Sigmoid-gated convex combination of the two modality features; the gate
  // is computed from the first branch. Concat mode stacks and reduces.
  Tensor fuse(const Tensor& fp, const Tensor& ft, int level) const {
    if (!(fp.shape() == ft.shape()))
      throw ShapeError("fuse: branch shapes differ, " + fp.shape().str() + " vs " +
                       ft.shape().str());
    const ConvWeights& g = gates[static_cast<std::size_t>(level)];
    if (!attention()) return apply_conv(concat_channels(fp, ft), g);
    const Tensor alpha = sigmoid(apply_conv(fp, g));
    return add(mul(alpha, fp), mul(affine(alpha, -1.0, 1.0), ft));
  }

  // One decoder stage: upsample the carried state to the target level (a
  // single doubling at most), derive a one-channel attention map from the
  // summed 1x1 projections, gate the upsampled state with it, and let a
  // residual block settle the channel count.
  Tensor decode(const Tensor& d_prev, const Tensor& fused, int level) const {
    Tensor up;
    if (d_prev.shape().h == fused.shape().h && d_prev.shape().w == fused.shape().w)
      up = d_prev;
    else if (2 * d_prev.shape().h == fused.shape().h &&
             2 * d_prev.shape().w == fused.shape().w)
      up = upsample2_bilinear(d_prev);
    else
      throw ShapeError("decode: state " + d_prev.shape().str() + " is more than one pooling from " +
                       fused.shape().str());
    const std::size_t m = static_cast<std::size_t>(level);
    if (!attention()) return apply_conv(concat_channels(up, fused), dec_reduce[m]);
    const Tensor dp = apply_conv(up, dec_d[m]);
    const Tensor fp = apply_conv(fused, dec_f[m]);
    const Tensor psi = sigmoid(apply_conv(relu(add(dp, fp)), dec_psi[m]));
    return residual_block(mul(up, psi), dec_post[m]);
  }

  Predictions forward(const Tensor& pca, const Tensor& tsr) const {
    const Shape sp = pca.shape(), st = tsr.shape();
    if (sp.c != cfg_.pca_channels || st.c != cfg_.tsr_channels)
      throw ShapeError("forward: modality channel counts " + sp.str() + " / " + st.str() +
                       " do not match the model config");
    if (sp.b != st.b || sp.h != st.h || sp.w != st.w)
      throw ShapeError("forward: modality tensors disagree outside channels");
    auto [fp, ft] = encode(pca, tsr);
    const int M = cfg_.levels;
    Tensor d = fuse(fp[static_cast<std::size_t>(M) - 1], ft[static_cast<std::size_t>(M) - 1], M - 1);
    for (int m = M - 2; m >= 0; --m)
      d = decode(d, fuse(fp[static_cast<std::size_t>(m)], ft[static_cast<std::size_t>(m)], m), m);
    Predictions out;
    if (cfg_.head == "multiclass") {
      out.class_logits = apply_conv(d, head_class);
    } else {
      out.binary_logits = apply_conv(d, head_binary);
      out.depth_mm = affine(sigmoid(apply_conv(d, head_depth)), cfg_.depth_max_mm, 0.0);
    }
    return out;
  }

  std::vector<BlockWeights> enc_pca, enc_tsr, dec_post;
  std::vector<ConvWeights> gates;                // attention: gate; concat: reduction
  std::vector<ConvWeights> dec_d, dec_f, dec_psi;  // attention decoder projections
  std::vector<ConvWeights> dec_reduce;             // concat decoder reductions
  ConvWeights head_class, head_binary, head_depth;

 private:
  static ConvWeights make_conv(const std::string& name, int c_in, int c_out, int k, Rng& rng) {
    const int fan_in = c_in * k * k, fan_out = c_out * k * k;
    ConvWeights c;
    c.kernel = make_param(name + ".k", Shape{c_out, c_in, k, k}, fan_in, fan_out, rng);
    c.bias = make_param(name + ".b", Shape{1, c_out, 1, 1}, fan_in, fan_out, rng);
    return c;
  }

  static BlockWeights make_block(const std::string& name, int c_in, int c_out, int k, Rng& rng) {
    BlockWeights b;
    b.c1 = make_conv(name + ".c1", c_in, c_out, k, rng);
    b.c2 = make_conv(name + ".c2", c_out, c_out, k, rng);
    b.projected = c_in != c_out;
    if (b.projected) b.shortcut = make_conv(name + ".proj", c_in, c_out, 1, rng);
    return b;
  }

  ModelConfig cfg_;
};

inline Tensor loss_multiclass(const Predictions& p, const std::vector<int>& class_labels) {
  if (!p.class_logits.defined())
    throw ConfigError("loss_multiclass: predictions carry no class logits");
  return softmax_cross_entropy(p.class_logits, class_labels);
}

// Joint mask + depth objective: pixel-averaged binary cross entropy plus
// lambda times the pixel-averaged absolute depth error (millimeters).
inline Tensor loss_binary_depth(const Predictions& p, const std::vector<double>& binary_mask,
                                const std::vector<double>& depth_mm, double lambda) {
  if (!p.binary_logits.defined() || !p.depth_mm.defined())
    throw ConfigError("loss_binary_depth: predictions carry no binary/depth maps");
  if (lambda < 0.0) throw ConfigError("loss_binary_depth: lambda must be >= 0");
  const Tensor bce = bce_with_logits(p.binary_logits, binary_mask);
  const Tensor l1 = l1_loss(p.depth_mm, depth_mm);
  return add(bce, affine(l1, lambda, 0.0));
}

// --------------------------------------------------------------------------
// Model checkpoints: the generic parameter snapshot plus the model config
// embedded in the manifest, so a file is self-describing.

inline void save_model(const FusionNet& model, long step, std::uint64_t seed,
                       const std::filesystem::path& path) {
  ordered_json meta;
  meta["model"] = ordered_json::object();
  to_json(meta["model"], model.config());
  save_checkpoint(model.parameters(), step, seed, path, meta);
}

inline FusionNet load_model(const std::filesystem::path& path, Checkpoint* ck_out = nullptr) {
  const Checkpoint ck = load_checkpoint(path);
  if (!ck.meta.contains("model"))
    throw FormatError("checkpoint has no embedded model config: " + path.string());
  FusionNet model(model_config_from_json(ck.meta["model"]), ck.seed);
  auto params = model.parameters();
  apply_checkpoint(ck, params);
  if (ck_out) *ck_out = ck;
  return model;
}

}  // namespace thermofuse
