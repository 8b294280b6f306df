#include "mcpseg/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mcpseg/kernels.hpp"

namespace mcpseg {

namespace {
constexpr int kTrunkInNoMcp = kPointFeatureDim;
constexpr int kTrunkInMcp = kPointFeatureDim + kTrunkDim;

void init_affine(Affine& a, int in, int out, Rng& rng) {
  a.resize(in, out);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  for (double& v : a.w) v = rng.uniform(-bound, bound);
}
}  // namespace

NetworkParams NetworkParams::init(bool use_mcp, Rng& rng) {
  NetworkParams p;
  p.use_mcp = use_mcp;
  init_affine(p.trunk, use_mcp ? kTrunkInMcp : kTrunkInNoMcp, kTrunkDim, rng);
  init_affine(p.embed_head, kTrunkDim, kEmbeddingDim, rng);
  init_affine(p.class_head, kHeadInDim, kNumClasses, rng);
  if (use_mcp) {
    init_affine(p.mcp1, kPointFeatureDim, kMcpHiddenDim, rng);
    init_affine(p.mcp2, kMcpHiddenDim, kTrunkDim, rng);
  }
  return p;
}

NetworkParams NetworkParams::zero_like(const NetworkParams& other) {
  NetworkParams p;
  p.use_mcp = other.use_mcp;
  p.trunk.resize(other.trunk.in_dim, other.trunk.out_dim);
  p.embed_head.resize(other.embed_head.in_dim, other.embed_head.out_dim);
  p.class_head.resize(other.class_head.in_dim, other.class_head.out_dim);
  if (other.use_mcp) {
    p.mcp1.resize(other.mcp1.in_dim, other.mcp1.out_dim);
    p.mcp2.resize(other.mcp2.in_dim, other.mcp2.out_dim);
  }
  return p;
}

std::size_t NetworkParams::parameter_count() const {
  std::size_t total = 0;
  for_each_tensor([&](const char*, const double*, std::size_t n) { total += n; });
  return total;
}

void NetworkParams::zero() {
  for_each_tensor([](const char*, double* d, std::size_t n) {
    std::fill(d, d + n, 0.0);
  });
}

namespace {

/// Runs the two MCP layers and the per-point max; fills the fwd fields.
void mcp_forward_impl(const std::vector<double>& context, int n, int m,
                      const NetworkParams& params, ForwardResult& fwd,
                      Exec exec) {
  if (m < 1) throw std::invalid_argument("mcp_forward: need at least one context point");
  if (context.size() != static_cast<std::size_t>(n) * m * kPointFeatureDim) {
    throw std::invalid_argument("mcp_forward: context tensor size mismatch");
  }
  const int rows = n * m;
  fwd.mcp_h1.resize(static_cast<std::size_t>(rows) * kMcpHiddenDim);
  fwd.mcp_h2.resize(static_cast<std::size_t>(rows) * kTrunkDim);
  fwd.mcp_out.resize(static_cast<std::size_t>(n) * kTrunkDim);
  fwd.mcp_argmax.resize(static_cast<std::size_t>(n) * kTrunkDim);

  kernels::affine_forward(context.data(), rows, kPointFeatureDim,
                          params.mcp1.w.data(), params.mcp1.b.data(),
                          fwd.mcp_h1.data(), kMcpHiddenDim, exec);
  kernels::relu_inplace(fwd.mcp_h1.data(), fwd.mcp_h1.size(), exec);
  kernels::affine_forward(fwd.mcp_h1.data(), rows, kMcpHiddenDim,
                          params.mcp2.w.data(), params.mcp2.b.data(),
                          fwd.mcp_h2.data(), kTrunkDim, exec);
  kernels::relu_inplace(fwd.mcp_h2.data(), fwd.mcp_h2.size(), exec);
  kernels::group_colmax(fwd.mcp_h2.data(), n, m, kTrunkDim, fwd.mcp_out.data(),
                        fwd.mcp_argmax.data(), exec);
}

}  // namespace

std::vector<double> mcp_forward(const std::vector<double>& context, int n,
                                int m, const NetworkParams& params, Exec exec) {
  if (!params.use_mcp) throw std::invalid_argument("params built without the context module");
  ForwardResult fwd;
  mcp_forward_impl(context, n, m, params, fwd, exec);
  return std::move(fwd.mcp_out);
}

ForwardResult forward(const Batch& batch, const NetworkParams& params,
                      Exec exec) {
  const int n = batch.n;
  if (n <= 0) throw std::invalid_argument("forward: empty batch");
  if (batch.inputs.size() != static_cast<std::size_t>(n) * kPointFeatureDim) {
    throw std::invalid_argument("forward: inputs size mismatch");
  }
  ForwardResult fwd;
  fwd.n = n;
  fwd.m = params.use_mcp ? batch.m : 0;

  const int trunk_in_dim = params.use_mcp ? kTrunkInMcp : kTrunkInNoMcp;
  if (params.trunk.in_dim != trunk_in_dim) {
    throw std::invalid_argument("forward: trunk dimension mismatch");
  }

  const bool p = exec == Exec::parallel;
  if (params.use_mcp) {
    mcp_forward_impl(batch.context, n, batch.m, params, fwd, exec);
    fwd.trunk_in.resize(static_cast<std::size_t>(n) * kTrunkInMcp);
#pragma omp parallel for schedule(static) if (p)
    for (int r = 0; r < n; ++r) {
      double* row = fwd.trunk_in.data() + static_cast<std::size_t>(r) * kTrunkInMcp;
      std::memcpy(row, batch.inputs.data() + static_cast<std::size_t>(r) * kPointFeatureDim,
                  sizeof(double) * kPointFeatureDim);
      std::memcpy(row + kPointFeatureDim,
                  fwd.mcp_out.data() + static_cast<std::size_t>(r) * kTrunkDim,
                  sizeof(double) * kTrunkDim);
    }
  } else {
    fwd.trunk_in = batch.inputs;
  }

  fwd.trunk_out.resize(static_cast<std::size_t>(n) * kTrunkDim);
  kernels::affine_forward(fwd.trunk_in.data(), n, trunk_in_dim,
                          params.trunk.w.data(), params.trunk.b.data(),
                          fwd.trunk_out.data(), kTrunkDim, exec);
  kernels::relu_inplace(fwd.trunk_out.data(), fwd.trunk_out.size(), exec);

  fwd.embeddings.resize(static_cast<std::size_t>(n) * kEmbeddingDim);
  kernels::affine_forward(fwd.trunk_out.data(), n, kTrunkDim,
                          params.embed_head.w.data(), params.embed_head.b.data(),
                          fwd.embeddings.data(), kEmbeddingDim, exec);
  fwd.embed_norms.resize(n);
  kernels::l2_normalize_rows(fwd.embeddings.data(), n, kEmbeddingDim,
                             fwd.embed_norms.data(), exec);

  fwd.global_feat.resize(kTrunkDim);
  fwd.global_argmax.resize(kTrunkDim);
  kernels::group_colmax(fwd.trunk_out.data(), 1, n, kTrunkDim,
                        fwd.global_feat.data(), fwd.global_argmax.data(), exec);

  fwd.head_in.resize(static_cast<std::size_t>(n) * kHeadInDim);
#pragma omp parallel for schedule(static) if (p)
  for (int r = 0; r < n; ++r) {
    double* row = fwd.head_in.data() + static_cast<std::size_t>(r) * kHeadInDim;
    std::memcpy(row, fwd.embeddings.data() + static_cast<std::size_t>(r) * kEmbeddingDim,
                sizeof(double) * kEmbeddingDim);
    std::memcpy(row + kEmbeddingDim, fwd.global_feat.data(),
                sizeof(double) * kTrunkDim);
  }

  fwd.logits.resize(static_cast<std::size_t>(n) * kNumClasses);
  kernels::affine_forward(fwd.head_in.data(), n, kHeadInDim,
                          params.class_head.w.data(), params.class_head.b.data(),
                          fwd.logits.data(), kNumClasses, exec);
  fwd.probs.resize(fwd.logits.size());
  kernels::softmax_rows(fwd.logits.data(), n, kNumClasses, fwd.probs.data(), exec);
  return fwd;
}

double loss_classification(const std::vector<double>& logits,
                           const std::vector<int>& gt_class, int n) {
  if (n <= 0 || logits.size() != static_cast<std::size_t>(n) * kNumClasses ||
      gt_class.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("loss_classification: shape mismatch");
  }
  double total = 0.0;
  for (int r = 0; r < n; ++r) {
    const double* row = logits.data() + static_cast<std::size_t>(r) * kNumClasses;
    double mx = row[0];
    for (int c = 1; c < kNumClasses; ++c) mx = std::max(mx, row[c]);
    double sum = 0.0;
    for (int c = 0; c < kNumClasses; ++c) sum += std::exp(row[c] - mx);
    total += mx + std::log(sum) - row[gt_class[r]];
  }
  return total / n;
}

namespace {

std::vector<double> pairwise_sqdist(const double* e, int n, int dim, Exec exec) {
  std::vector<double> d2(static_cast<std::size_t>(n) * n, 0.0);
  const bool p = exec == Exec::parallel;
#pragma omp parallel for schedule(static) if (p)
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double* ei = e + static_cast<std::size_t>(i) * dim;
      const double* ej = e + static_cast<std::size_t>(j) * dim;
      double s = 0.0;
      for (int k = 0; k < dim; ++k) {
        const double d = ei[k] - ej[k];
        s += d * d;
      }
      d2[static_cast<std::size_t>(i) * n + j] = s;
    }
  }
  return d2;
}

/// Visits each ordered anchor-positive pair with its semihard negative.
/// Returns the number of visited pairs.
template <class Visit>
long for_each_triplet(const std::vector<double>& d2, int n,
                      const std::vector<int>& inst, Visit&& visit) {
  long pairs = 0;
  for (int a = 0; a < n; ++a) {
    bool has_negative = false;
    for (int j = 0; j < n && !has_negative; ++j) {
      if (inst[j] != inst[a]) has_negative = true;
    }
    if (!has_negative) continue;
    const double* da = d2.data() + static_cast<std::size_t>(a) * n;
    for (int p = 0; p < n; ++p) {
      if (p == a || inst[p] != inst[a]) continue;
      const double d2ap = da[p];
      int semihard = -1, farthest = -1;
      double semihard_d2 = 0.0, farthest_d2 = -1.0;
      for (int j = 0; j < n; ++j) {
        if (inst[j] == inst[a]) continue;
        const double d2an = da[j];
        if (d2an > d2ap && (semihard < 0 || d2an < semihard_d2)) {
          semihard = j;
          semihard_d2 = d2an;
        }
        if (d2an > farthest_d2) {
          farthest = j;
          farthest_d2 = d2an;
        }
      }
      const int neg = semihard >= 0 ? semihard : farthest;
      ++pairs;
      visit(a, p, neg, d2ap, da[neg]);
    }
  }
  return pairs;
}

}  // namespace

double loss_triplet_semihard(const std::vector<double>& embeddings, int n,
                             int dim, const std::vector<int>& gt_instance,
                             double margin) {
  if (embeddings.size() != static_cast<std::size_t>(n) * dim ||
      gt_instance.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("loss_triplet_semihard: shape mismatch");
  }
  const std::vector<double> d2 = pairwise_sqdist(embeddings.data(), n, dim, Exec::serial);
  double total = 0.0;
  const long pairs = for_each_triplet(
      d2, n, gt_instance, [&](int, int, int, double d2ap, double d2an) {
        total += std::max(0.0, d2ap - d2an + margin);
      });
  return pairs > 0 ? total / pairs : 0.0;
}

LossValues backward(const Batch& batch, const NetworkParams& params,
                    const ForwardResult& fwd, double margin, double lambda,
                    Gradients& grads, Exec exec) {
  const int n = fwd.n;
  const bool p = exec == Exec::parallel;
  grads.zero();

  LossValues losses;
  losses.ce = loss_classification(fwd.logits, batch.gt_class, n);

  // softmax cross entropy: dlogits = (probs - onehot) / n
  std::vector<double> dlogits = fwd.probs;
  {
    const double inv_n = 1.0 / n;
    for (int r = 0; r < n; ++r) {
      double* row = dlogits.data() + static_cast<std::size_t>(r) * kNumClasses;
      row[batch.gt_class[r]] -= 1.0;
      for (int c = 0; c < kNumClasses; ++c) row[c] *= inv_n;
    }
  }

  kernels::affine_backward_params(fwd.head_in.data(), dlogits.data(), n,
                                  kHeadInDim, kNumClasses,
                                  grads.class_head.w.data(),
                                  grads.class_head.b.data(), exec);
  std::vector<double> dhead_in(static_cast<std::size_t>(n) * kHeadInDim);
  kernels::affine_backward_input(dlogits.data(), n, kHeadInDim,
                                 params.class_head.w.data(), dhead_in.data(),
                                 kNumClasses, exec);

  // gradient w.r.t. the normalized embeddings: classifier slice + triplet
  std::vector<double> dembed(static_cast<std::size_t>(n) * kEmbeddingDim);
  for (int r = 0; r < n; ++r) {
    std::memcpy(dembed.data() + static_cast<std::size_t>(r) * kEmbeddingDim,
                dhead_in.data() + static_cast<std::size_t>(r) * kHeadInDim,
                sizeof(double) * kEmbeddingDim);
  }

  if (lambda != 0.0) {
    const std::vector<double> d2 =
        pairwise_sqdist(fwd.embeddings.data(), n, kEmbeddingDim, exec);
    double total = 0.0;
    std::vector<std::array<int, 3>> active;  // (anchor, positive, negative)
    const long pairs = for_each_triplet(
        d2, n, batch.gt_instance,
        [&](int a, int pp, int neg, double d2ap, double d2an) {
          const double viol = d2ap - d2an + margin;
          if (viol > 0.0) {
            total += viol;
            active.push_back({a, pp, neg});
          }
        });
    losses.triplet = pairs > 0 ? total / pairs : 0.0;
    if (pairs > 0) {
      const double scale = 2.0 * lambda / pairs;
      for (const auto& [a, pp, neg] : active) {
        const double* ea = fwd.embeddings.data() + static_cast<std::size_t>(a) * kEmbeddingDim;
        const double* ep = fwd.embeddings.data() + static_cast<std::size_t>(pp) * kEmbeddingDim;
        const double* en = fwd.embeddings.data() + static_cast<std::size_t>(neg) * kEmbeddingDim;
        double* ga = dembed.data() + static_cast<std::size_t>(a) * kEmbeddingDim;
        double* gp = dembed.data() + static_cast<std::size_t>(pp) * kEmbeddingDim;
        double* gn = dembed.data() + static_cast<std::size_t>(neg) * kEmbeddingDim;
        for (int k = 0; k < kEmbeddingDim; ++k) {
          ga[k] += scale * (en[k] - ep[k]);
          gp[k] += scale * (ep[k] - ea[k]);
          gn[k] += scale * (ea[k] - en[k]);
        }
      }
    }
  } else {
    losses.triplet = loss_triplet_semihard(fwd.embeddings, n, kEmbeddingDim,
                                           batch.gt_instance, margin);
  }

  // back through row L2 normalization: dx = (dy - y (y.dy)) / norm
  std::vector<double> dembed_raw(static_cast<std::size_t>(n) * kEmbeddingDim);
#pragma omp parallel for schedule(static) if (p)
  for (int r = 0; r < n; ++r) {
    const double* y = fwd.embeddings.data() + static_cast<std::size_t>(r) * kEmbeddingDim;
    const double* dy = dembed.data() + static_cast<std::size_t>(r) * kEmbeddingDim;
    double* dx = dembed_raw.data() + static_cast<std::size_t>(r) * kEmbeddingDim;
    const double norm = fwd.embed_norms[r];
    if (norm <= 0.0) {
      std::fill(dx, dx + kEmbeddingDim, 0.0);
      continue;
    }
    double ydy = 0.0;
    for (int k = 0; k < kEmbeddingDim; ++k) ydy += y[k] * dy[k];
    const double inv = 1.0 / norm;
    for (int k = 0; k < kEmbeddingDim; ++k) dx[k] = (dy[k] - y[k] * ydy) * inv;
  }

  kernels::affine_backward_params(fwd.trunk_out.data(), dembed_raw.data(), n,
                                  kTrunkDim, kEmbeddingDim,
                                  grads.embed_head.w.data(),
                                  grads.embed_head.b.data(), exec);
  std::vector<double> dtrunk(static_cast<std::size_t>(n) * kTrunkDim);
  kernels::affine_backward_input(dembed_raw.data(), n, kTrunkDim,
                                 params.embed_head.w.data(), dtrunk.data(),
                                 kEmbeddingDim, exec);

  // global max pool: the winning row per feature collects the column sum
#pragma omp parallel for schedule(static) if (p)
  for (int c = 0; c < kTrunkDim; ++c) {
    double total = 0.0;
    for (int r = 0; r < n; ++r) {
      total += dhead_in[static_cast<std::size_t>(r) * kHeadInDim + kEmbeddingDim + c];
    }
    dtrunk[static_cast<std::size_t>(fwd.global_argmax[c]) * kTrunkDim + c] += total;
  }

  kernels::relu_backward(fwd.trunk_out.data(), dtrunk.data(), dtrunk.size(), exec);

  const int trunk_in_dim = params.trunk.in_dim;
  kernels::affine_backward_params(fwd.trunk_in.data(), dtrunk.data(), n,
                                  trunk_in_dim, kTrunkDim,
                                  grads.trunk.w.data(), grads.trunk.b.data(),
                                  exec);

  if (params.use_mcp) {
    const int m = fwd.m;
    std::vector<double> dtrunk_in(static_cast<std::size_t>(n) * trunk_in_dim);
    kernels::affine_backward_input(dtrunk.data(), n, trunk_in_dim,
                                   params.trunk.w.data(), dtrunk_in.data(),
                                   kTrunkDim, exec);

    // The max over context points makes the layer-2 gradient sparse: one
    // winning row per (point, feature). Route through a transposed weight
    // copy so the inner loops stay unit-stride.
    std::vector<double> w2t(static_cast<std::size_t>(kTrunkDim) * kMcpHiddenDim);
    for (int k = 0; k < kMcpHiddenDim; ++k)
      for (int c = 0; c < kTrunkDim; ++c)
        w2t[static_cast<std::size_t>(c) * kMcpHiddenDim + k] =
            params.mcp2.w[static_cast<std::size_t>(k) * kTrunkDim + c];

    std::vector<double> dh1(static_cast<std::size_t>(n) * m * kMcpHiddenDim, 0.0);
#pragma omp parallel for schedule(static) if (p)
    for (int i = 0; i < n; ++i) {
      const double* dmcp = dtrunk_in.data() +
                           static_cast<std::size_t>(i) * trunk_in_dim + kPointFeatureDim;
      for (int c = 0; c < kTrunkDim; ++c) {
        const int j = fwd.mcp_argmax[static_cast<std::size_t>(i) * kTrunkDim + c];
        const std::size_t row = static_cast<std::size_t>(i) * m + j;
        if (fwd.mcp_h2[row * kTrunkDim + c] <= 0.0) continue;
        const double g = dmcp[c];
        if (g == 0.0) continue;
        const double* wc = w2t.data() + static_cast<std::size_t>(c) * kMcpHiddenDim;
        double* drow = dh1.data() + row * kMcpHiddenDim;
        for (int k = 0; k < kMcpHiddenDim; ++k) drow[k] += g * wc[k];
      }
    }

    // layer-2 parameter gradients, accumulated transposed per column
    std::vector<double> dw2t(static_cast<std::size_t>(kTrunkDim) * kMcpHiddenDim, 0.0);
#pragma omp parallel for schedule(static) if (p)
    for (int c = 0; c < kTrunkDim; ++c) {
      double* dwc = dw2t.data() + static_cast<std::size_t>(c) * kMcpHiddenDim;
      double dbc = 0.0;
      for (int i = 0; i < n; ++i) {
        const int j = fwd.mcp_argmax[static_cast<std::size_t>(i) * kTrunkDim + c];
        const std::size_t row = static_cast<std::size_t>(i) * m + j;
        if (fwd.mcp_h2[row * kTrunkDim + c] <= 0.0) continue;
        const double g =
            dtrunk_in[static_cast<std::size_t>(i) * trunk_in_dim + kPointFeatureDim + c];
        if (g == 0.0) continue;
        dbc += g;
        const double* h1row = fwd.mcp_h1.data() + row * kMcpHiddenDim;
        for (int k = 0; k < kMcpHiddenDim; ++k) dwc[k] += g * h1row[k];
      }
      grads.mcp2.b[c] = dbc;
    }
    for (int k = 0; k < kMcpHiddenDim; ++k)
      for (int c = 0; c < kTrunkDim; ++c)
        grads.mcp2.w[static_cast<std::size_t>(k) * kTrunkDim + c] =
            dw2t[static_cast<std::size_t>(c) * kMcpHiddenDim + k];

    kernels::relu_backward(fwd.mcp_h1.data(), dh1.data(), dh1.size(), exec);
    kernels::affine_backward_params(batch.context.data(), dh1.data(), n * m,
                                    kPointFeatureDim, kMcpHiddenDim,
                                    grads.mcp1.w.data(), grads.mcp1.b.data(),
                                    exec);
  }
  return losses;
}

AdamState AdamState::init(const NetworkParams& params, double lr) {
  AdamState s;
  s.lr = lr;
  const std::size_t total = params.parameter_count();
  s.m.assign(total, 0.0);
  s.v.assign(total, 0.0);
  return s;
}

void adam_step(NetworkParams& params, const Gradients& grads, AdamState& state,
               Exec exec) {
  if (state.m.size() != params.parameter_count()) {
    throw std::invalid_argument("adam_step: state size mismatch");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  const bool p = exec == Exec::parallel;

  std::size_t offset = 0;
  std::vector<std::pair<double*, const double*>> spans;
  std::vector<std::size_t> sizes, offsets;
  params.for_each_tensor([&](const char*, double* data, std::size_t size) {
    spans.push_back({data, nullptr});
    sizes.push_back(size);
    offsets.push_back(offset);
    offset += size;
  });
  std::size_t ti = 0;
  grads.for_each_tensor([&](const char*, const double* g, std::size_t) {
    spans[ti++].second = g;
  });

  for (std::size_t t = 0; t < spans.size(); ++t) {
    double* w = spans[t].first;
    const double* g = spans[t].second;
    double* m = state.m.data() + offsets[t];
    double* v = state.v.data() + offsets[t];
    const std::ptrdiff_t len = static_cast<std::ptrdiff_t>(sizes[t]);
#pragma omp parallel for schedule(static) if (p)
    for (std::ptrdiff_t i = 0; i < len; ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open training config: " + path);
  TrainConfig cfg;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected key=value");
    }
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "epochs") cfg.epochs = std::stoi(value);
      else if (key == "lr") cfg.lr = std::stod(value);
      else if (key == "n" || key == "N") cfg.batch_n = std::stoi(value);
      else if (key == "m" || key == "M") cfg.context_m = std::stoi(value);
      else if (key == "alpha") cfg.margin = std::stod(value);
      else if (key == "lambda") cfg.lambda = std::stod(value);
      else if (key == "seed") cfg.seed = std::stoull(value);
      else if (key == "use_mcp") cfg.use_mcp = (value == "1" || value == "true");
      else if (key == "checkpoint_every") cfg.checkpoint_every = std::stoi(value);
      else if (key == "checkpoint_path") cfg.checkpoint_path = value;
      else throw std::runtime_error("unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": bad value for " + key);
    }
  }
  return cfg;
}

TrainResult train(const std::vector<Batch>& dataset, const TrainConfig& cfg,
                  Exec exec, const NetworkParams* resume_params,
                  const AdamState* resume_adam) {
  if (dataset.empty()) throw std::invalid_argument("training dataset is empty");
  const Rng master(cfg.seed);

  TrainResult out;
  if (resume_params) {
    out.params = *resume_params;
  } else {
    Rng init_rng = master.fork(0xA110);
    out.params = NetworkParams::init(cfg.use_mcp, init_rng);
  }
  out.adam = resume_adam ? *resume_adam : AdamState::init(out.params, cfg.lr);
  out.adam.lr = cfg.lr;

  const long batches = static_cast<long>(dataset.size());
  const long start_epoch = out.adam.step / batches;

  Gradients grads = NetworkParams::zero_like(out.params);
  std::vector<int> order(dataset.size());
  for (long epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng erng = master.fork(0xE70C + static_cast<std::uint64_t>(epoch));
    erng.shuffle(order);

    EpochLoss epoch_loss;
    for (const int bi : order) {
      const Batch& batch = dataset[bi];
      const ForwardResult fwd = forward(batch, out.params, exec);
      const LossValues lv =
          backward(batch, out.params, fwd, cfg.margin, cfg.lambda, grads, exec);
      adam_step(out.params, grads, out.adam, exec);
      epoch_loss.ce += lv.ce;
      epoch_loss.triplet += lv.triplet;
    }
    epoch_loss.ce /= batches;
    epoch_loss.triplet /= batches;
    out.history.push_back(epoch_loss);

    if (!cfg.checkpoint_path.empty() &&
        ((epoch + 1) % cfg.checkpoint_every == 0 || epoch + 1 == cfg.epochs)) {
      save_checkpoint(cfg.checkpoint_path, out.params, &out.adam);
    }
  }
  return out;
}

// ---- checkpoint container -------------------------------------------------

namespace {
constexpr char kCheckpointMagic[8] = {'M', 'C', 'P', 'S', 'E', 'G', 'C', 'K'};

template <class T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
void read_pod(std::ifstream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
}
}  // namespace

void save_checkpoint(const std::string& path, const NetworkParams& params,
                     const AdamState* adam) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_pod(out, std::uint32_t{1});  // version
  write_pod(out, static_cast<std::uint8_t>(params.use_mcp ? 1 : 0));
  write_pod(out, static_cast<std::uint8_t>(adam ? 1 : 0));
  write_pod(out, std::uint16_t{0});
  write_pod(out, static_cast<std::uint32_t>(params.trunk.in_dim));
  write_pod(out, static_cast<std::int64_t>(adam ? adam->step : 0));

  std::uint32_t count = 0;
  params.for_each_tensor([&](const char*, const double*, std::size_t) { ++count; });
  write_pod(out, count);

  params.for_each_tensor([&](const char* name, const double* data, std::size_t size) {
    const std::uint32_t len = static_cast<std::uint32_t>(std::strlen(name));
    write_pod(out, len);
    out.write(name, len);
    write_pod(out, static_cast<std::uint64_t>(size));
    out.write(reinterpret_cast<const char*>(data),
              static_cast<std::streamsize>(size * sizeof(double)));
  });

  if (adam) {
    write_pod(out, adam->lr);
    write_pod(out, adam->beta1);
    write_pod(out, adam->beta2);
    write_pod(out, adam->eps);
    write_pod(out, static_cast<std::uint64_t>(adam->m.size()));
    out.write(reinterpret_cast<const char*>(adam->m.data()),
              static_cast<std::streamsize>(adam->m.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(adam->v.data()),
              static_cast<std::streamsize>(adam->v.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("not a checkpoint file: " + path);
  }
  std::uint32_t version;
  read_pod(in, version);
  if (version != 1) throw std::runtime_error("unsupported checkpoint version");
  std::uint8_t use_mcp, has_adam;
  std::uint16_t reserved;
  std::uint32_t trunk_in;
  std::int64_t step;
  read_pod(in, use_mcp);
  read_pod(in, has_adam);
  read_pod(in, reserved);
  read_pod(in, trunk_in);
  read_pod(in, step);

  Checkpoint ck;
  ck.params.use_mcp = use_mcp != 0;
  ck.params.trunk.resize(static_cast<int>(trunk_in), kTrunkDim);
  ck.params.embed_head.resize(kTrunkDim, kEmbeddingDim);
  ck.params.class_head.resize(kHeadInDim, kNumClasses);
  if (ck.params.use_mcp) {
    ck.params.mcp1.resize(kPointFeatureDim, kMcpHiddenDim);
    ck.params.mcp2.resize(kMcpHiddenDim, kTrunkDim);
  }

  std::uint32_t count;
  read_pod(in, count);
  std::uint32_t expected = 0;
  ck.params.for_each_tensor([&](const char*, double*, std::size_t) { ++expected; });
  if (count != expected) throw std::runtime_error("checkpoint tensor count mismatch");

  ck.params.for_each_tensor([&](const char* name, double* data, std::size_t size) {
    std::uint32_t len;
    read_pod(in, len);
    std::string stored(len, '\0');
    in.read(stored.data(), len);
    std::uint64_t stored_size;
    read_pod(in, stored_size);
    if (stored != name || stored_size != size) {
      throw std::runtime_error("checkpoint tensor mismatch at " + stored);
    }
    in.read(reinterpret_cast<char*>(data),
            static_cast<std::streamsize>(size * sizeof(double)));
  });

  if (has_adam) {
    AdamState adam;
    adam.step = step;
    read_pod(in, adam.lr);
    read_pod(in, adam.beta1);
    read_pod(in, adam.beta2);
    read_pod(in, adam.eps);
    std::uint64_t flat;
    read_pod(in, flat);
    adam.m.resize(flat);
    adam.v.resize(flat);
    in.read(reinterpret_cast<char*>(adam.m.data()),
            static_cast<std::streamsize>(flat * sizeof(double)));
    in.read(reinterpret_cast<char*>(adam.v.data()),
            static_cast<std::streamsize>(flat * sizeof(double)));
    ck.adam = std::move(adam);
  }
  if (!in) throw std::runtime_error("truncated checkpoint: " + path);
  return ck;
}

}  // namespace mcpseg
