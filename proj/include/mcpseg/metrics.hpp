#pragma once

#include <array>
#include <string>
#include <vector>

#include "mcpseg/common.hpp"

namespace mcpseg {

/// Per-point ground truth and predictions; only points that received
/// predictions are included.
struct EvalPair {
  std::vector<int> gt_class;
  std::vector<int> pred_class;
  std::vector<int> gt_instance;
  std::vector<int> pred_instance;
};

struct IouResult {
  std::array<double, kNumClasses> per_class{};  // NaN when undefined
  std::array<bool, kNumClasses> defined{};
  double mean = 0.0;  // over defined classes only
};

/// Per class: TP / (TP + FP + FN). Classes absent from both ground truth
/// and prediction are undefined and excluded from the mean.
IouResult iou(const EvalPair& eval);

double point_accuracy(const EvalPair& eval);

/// A ground-truth instance counts as correct when some predicted cluster
/// reaches point-set IoU >= 0.5 with it and that cluster's majority
/// predicted class equals the instance's class.
double object_accuracy(const EvalPair& eval);

/// Contingency table between two label partitions with marginals and the
/// sum over cells of C(n_ij, 2).
struct Contingency {
  int rows = 0, cols = 0;
  std::vector<long long> counts;  // rows x cols
  std::vector<long long> a, b;    // row / column marginals
  long long n = 0;
  long long pair_sum = 0;  // sum C(n_ij, 2)
};

Contingency pair_counting(const std::vector<int>& u, const std::vector<int>& v);

/// I(U;V) / sqrt(H(U) H(V)), natural log. Partitions equal up to relabeling
/// give exactly 1; a zero-entropy side with differing partitions gives 0.
double nmi(const std::vector<int>& u, const std::vector<int>& v);

/// (I - E[I]) / (max(H(U), H(V)) - E[I]) with the hypergeometric expected
/// mutual information.
double ami(const std::vector<int>& u, const std::vector<int>& v);

/// (sum C(n_ij,2) - E) / (0.5 (sum C(a_i,2) + sum C(b_j,2)) - E).
double ari(const std::vector<int>& u, const std::vector<int>& v);

inline double nmi(const EvalPair& e) { return nmi(e.gt_instance, e.pred_instance); }
inline double ami(const EvalPair& e) { return ami(e.gt_instance, e.pred_instance); }
inline double ari(const EvalPair& e) { return ari(e.gt_instance, e.pred_instance); }

struct MetricsReport {
  IouResult iou;
  double point_acc = 0.0;
  double object_acc = 0.0;
  double nmi = 0.0;
  double ami = 0.0;
  double ari = 0.0;
};

MetricsReport evaluate_all(const EvalPair& eval);

/// CSV with one per-class IOU row per defined class and a final summary row
/// (meanIOU, pointAcc, objAcc, NMI, AMI, ARI).
void write_report(const std::string& path, const MetricsReport& report,
                  const std::array<std::string, kNumClasses>& class_names);

}  // namespace mcpseg
