#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mcpseg/common.hpp"

namespace mcpseg {

constexpr int kTrunkDim = 200;
constexpr int kMcpHiddenDim = 64;
constexpr int kHeadInDim = kEmbeddingDim + kTrunkDim;  // embedding (+) global

/// Shared per-point affine map (kernel-size-1 convolution).
struct Affine {
  int in_dim = 0, out_dim = 0;
  std::vector<double> w;  // row-major [in][out]
  std::vector<double> b;  // [out]

  void resize(int in, int out) {
    in_dim = in;
    out_dim = out;
    w.assign(static_cast<std::size_t>(in) * out, 0.0);
    b.assign(out, 0.0);
  }
};

/// All trainable tensors. The same container doubles as the gradient
/// accumulator (see zero_like).
struct NetworkParams {
  bool use_mcp = false;
  Affine trunk;       // (6 | 206) -> 200
  Affine embed_head;  // 200 -> 50
  Affine class_head;  // 250 -> 13
  Affine mcp1;        // 6 -> 64, only when use_mcp
  Affine mcp2;        // 64 -> 200

  /// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases.
  static NetworkParams init(bool use_mcp, Rng& rng);
  static NetworkParams zero_like(const NetworkParams& other);

  /// Visits every tensor in canonical order: fn(name, double*, size).
  /// The order defines the optimizer-state and checkpoint layout.
  template <class Fn>
  void for_each_tensor(Fn&& fn) {
    fn("trunk.w", trunk.w.data(), trunk.w.size());
    fn("trunk.b", trunk.b.data(), trunk.b.size());
    fn("embed_head.w", embed_head.w.data(), embed_head.w.size());
    fn("embed_head.b", embed_head.b.data(), embed_head.b.size());
    fn("class_head.w", class_head.w.data(), class_head.w.size());
    fn("class_head.b", class_head.b.data(), class_head.b.size());
    if (use_mcp) {
      fn("mcp1.w", mcp1.w.data(), mcp1.w.size());
      fn("mcp1.b", mcp1.b.data(), mcp1.b.size());
      fn("mcp2.w", mcp2.w.data(), mcp2.w.size());
      fn("mcp2.b", mcp2.b.data(), mcp2.b.size());
    }
  }
  template <class Fn>
  void for_each_tensor(Fn&& fn) const {
    const_cast<NetworkParams*>(this)->for_each_tensor(
        [&](const char* name, double* data, std::size_t size) {
          fn(name, static_cast<const double*>(data), size);
        });
  }

  std::size_t parameter_count() const;
  void zero();
};

using Gradients = NetworkParams;

/// One network input batch: per-point features plus the per-point context
/// tensor. Rows at index >= real_rows are replacement-sampled padding whose
/// predictions are discarded at map-update time.
struct Batch {
  int n = 0;
  int m = 0;                    // context points per row (0 when unused)
  std::vector<double> inputs;   // n x 6
  std::vector<double> context;  // n x m x 6
  std::vector<int> gt_class;    // n
  std::vector<int> gt_instance; // n
  int real_rows = 0;
};

/// Intermediate activations kept for the backward pass.
struct ForwardResult {
  int n = 0, m = 0;
  std::vector<double> mcp_h1;       // (n*m) x 64, post ReLU
  std::vector<double> mcp_h2;       // (n*m) x 200, post ReLU
  std::vector<double> mcp_out;      // n x 200
  std::vector<int> mcp_argmax;      // n x 200, winning context row per dim
  std::vector<double> trunk_in;     // n x (6 | 206)
  std::vector<double> trunk_out;    // n x 200, post ReLU
  std::vector<double> embeddings;   // n x 50, unit rows
  std::vector<double> embed_norms;  // n, pre-normalization row norms
  std::vector<double> global_feat;  // 200, max over rows of trunk_out
  std::vector<int> global_argmax;   // 200
  std::vector<double> head_in;      // n x 250
  std::vector<double> logits;       // n x 13
  std::vector<double> probs;        // n x 13
};

/// Per context point ReLU(affine 6->64) then ReLU(affine 64->200),
/// elementwise max over the M axis. Returns the n x 200 output.
std::vector<double> mcp_forward(const std::vector<double>& context, int n,
                                int m, const NetworkParams& params,
                                Exec exec = Exec::parallel);

ForwardResult forward(const Batch& batch, const NetworkParams& params,
                      Exec exec = Exec::parallel);

/// Mean over rows of -log softmax(logits)[gt].
double loss_classification(const std::vector<double>& logits,
                           const std::vector<int>& gt_class, int n);

/// Semihard triplet loss over all ordered anchor-positive pairs: the
/// negative is the closest one farther than the positive, falling back to
/// the farthest negative. Degenerate batches (no pair with a negative)
/// yield 0.
double loss_triplet_semihard(const std::vector<double>& embeddings, int n,
                             int dim, const std::vector<int>& gt_instance,
                             double margin);

struct LossValues {
  double ce = 0.0;
  double triplet = 0.0;
};

/// Exact gradients of loss_classification + lambda * loss_triplet_semihard
/// for every parameter. `grads` is zeroed first. Max-pool subgradients send
/// the gradient to the lowest winning index.
LossValues backward(const Batch& batch, const NetworkParams& params,
                    const ForwardResult& fwd, double margin, double lambda,
                    Gradients& grads, Exec exec = Exec::parallel);

struct AdamState {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<double> m, v;  // flattened in canonical tensor order

  static AdamState init(const NetworkParams& params, double lr = 0.001);
};

/// Bias-corrected update: p -= lr * m_hat / (sqrt(v_hat) + eps).
void adam_step(NetworkParams& params, const Gradients& grads, AdamState& state,
               Exec exec = Exec::parallel);

struct TrainConfig {
  int epochs = 100;
  double lr = 0.001;
  int batch_n = 256;
  int context_m = 50;
  double margin = 1.0;   // triplet margin
  double lambda = 1.0;   // triplet loss weight
  std::uint64_t seed = 1;
  bool use_mcp = true;
  int checkpoint_every = 25;
  std::string checkpoint_path;  // empty: no checkpoints written
};

/// Reads "key=value" lines: epochs, lr, n, m, alpha, lambda, seed, use_mcp.
TrainConfig load_train_config(const std::string& path);

struct EpochLoss {
  double ce = 0.0;
  double triplet = 0.0;
};

struct TrainResult {
  NetworkParams params;
  AdamState adam;
  std::vector<EpochLoss> history;  // one entry per epoch run in this call
};

/// Runs shuffled-batch epochs of the joint loss until `epochs` total epochs
/// have been completed (counting any resumed progress). Throws on an empty
/// dataset. Fixed seeds give bit-identical loss histories.
TrainResult train(const std::vector<Batch>& dataset, const TrainConfig& cfg,
                  Exec exec = Exec::parallel,
                  const NetworkParams* resume_params = nullptr,
                  const AdamState* resume_adam = nullptr);

// ---- checkpoint container -------------------------------------------------

/// Versioned little-endian binary container of all named weight tensors,
/// with byte-stable layout across runs. Optimizer state is optional.
void save_checkpoint(const std::string& path, const NetworkParams& params,
                     const AdamState* adam);

struct Checkpoint {
  NetworkParams params;
  std::optional<AdamState> adam;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace mcpseg
