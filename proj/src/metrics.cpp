#include "mcpseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <unordered_map>

namespace mcpseg {

namespace {
void check_nonempty(const EvalPair& e) {
  if (e.gt_class.empty() || e.gt_class.size() != e.pred_class.size() ||
      e.gt_class.size() != e.gt_instance.size() ||
      e.gt_class.size() != e.pred_instance.size()) {
    throw std::invalid_argument("evaluation arrays empty or length mismatch");
  }
}
}  // namespace

IouResult iou(const EvalPair& eval) {
  check_nonempty(eval);
  std::array<long long, kNumClasses> tp{}, fp{}, fn{};
  for (std::size_t i = 0; i < eval.gt_class.size(); ++i) {
    const int g = eval.gt_class[i];
    const int p = eval.pred_class[i];
    if (g == p) {
      ++tp[g];
    } else {
      ++fn[g];
      ++fp[p];
    }
  }
  IouResult out;
  double sum = 0.0;
  int defined = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    const long long denom = tp[c] + fp[c] + fn[c];
    if (denom == 0) {
      out.per_class[c] = std::numeric_limits<double>::quiet_NaN();
      out.defined[c] = false;
    } else {
      out.per_class[c] = static_cast<double>(tp[c]) / static_cast<double>(denom);
      out.defined[c] = true;
      sum += out.per_class[c];
      ++defined;
    }
  }
  out.mean = defined > 0 ? sum / defined : 0.0;
  return out;
}

double point_accuracy(const EvalPair& eval) {
  check_nonempty(eval);
  long long correct = 0;
  for (std::size_t i = 0; i < eval.gt_class.size(); ++i) {
    if (eval.gt_class[i] == eval.pred_class[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(eval.gt_class.size());
}

double object_accuracy(const EvalPair& eval) {
  check_nonempty(eval);
  const std::size_t n = eval.gt_class.size();

  std::map<int, long long> gt_size, pred_size;
  std::map<std::pair<int, int>, long long> overlap;  // (gt inst, pred inst)
  std::map<std::pair<int, int>, long long> gt_class_votes;   // (gt inst, class)
  std::map<std::pair<int, int>, long long> pred_class_votes; // (pred inst, class)
  for (std::size_t i = 0; i < n; ++i) {
    ++gt_size[eval.gt_instance[i]];
    ++pred_size[eval.pred_instance[i]];
    ++overlap[{eval.gt_instance[i], eval.pred_instance[i]}];
    ++gt_class_votes[{eval.gt_instance[i], eval.gt_class[i]}];
    ++pred_class_votes[{eval.pred_instance[i], eval.pred_class[i]}];
  }

  auto majority = [](const std::map<std::pair<int, int>, long long>& votes,
                     int instance) {
    int best_class = -1;
    long long best = -1;
    for (auto it = votes.lower_bound({instance, std::numeric_limits<int>::min()});
         it != votes.end() && it->first.first == instance; ++it) {
      if (it->second > best) {  // ties resolve to the lowest class id
        best = it->second;
        best_class = it->first.second;
      }
    }
    return best_class;
  };

  long long true_positives = 0;
  for (const auto& [gi, gsize] : gt_size) {
    const int gt_cls = majority(gt_class_votes, gi);
    bool matched = false;
    for (auto it = overlap.lower_bound({gi, std::numeric_limits<int>::min()});
         it != overlap.end() && it->first.first == gi && !matched; ++it) {
      const int pi = it->first.second;
      const long long inter = it->second;
      const long long uni = gsize + pred_size[pi] - inter;
      if (uni <= 0) continue;
      if (static_cast<double>(inter) / static_cast<double>(uni) >= 0.5 &&
          majority(pred_class_votes, pi) == gt_cls) {
        matched = true;
      }
    }
    if (matched) ++true_positives;
  }
  return static_cast<double>(true_positives) / static_cast<double>(gt_size.size());
}

Contingency pair_counting(const std::vector<int>& u, const std::vector<int>& v) {
  if (u.empty() || u.size() != v.size()) {
    throw std::invalid_argument("pair_counting: empty or mismatched partitions");
  }
  std::map<int, int> row_of, col_of;
  for (const int x : u) row_of.emplace(x, 0);
  for (const int y : v) col_of.emplace(y, 0);
  int r = 0;
  for (auto& [label, idx] : row_of) idx = r++;
  int c = 0;
  for (auto& [label, idx] : col_of) idx = c++;

  Contingency t;
  t.rows = r;
  t.cols = c;
  t.n = static_cast<long long>(u.size());
  t.counts.assign(static_cast<std::size_t>(r) * c, 0);
  t.a.assign(r, 0);
  t.b.assign(c, 0);
  for (std::size_t i = 0; i < u.size(); ++i) {
    const int ri = row_of[u[i]];
    const int ci = col_of[v[i]];
    ++t.counts[static_cast<std::size_t>(ri) * c + ci];
    ++t.a[ri];
    ++t.b[ci];
  }
  for (const long long nij : t.counts) t.pair_sum += nij * (nij - 1) / 2;
  return t;
}

namespace {

double entropy(const std::vector<long long>& marginals, long long n) {
  double h = 0.0;
  for (const long long c : marginals) {
    if (c > 0) {
      const double p = static_cast<double>(c) / static_cast<double>(n);
      h -= p * std::log(p);
    }
  }
  return h;
}

double mutual_information(const Contingency& t) {
  double info = 0.0;
  for (int i = 0; i < t.rows; ++i) {
    for (int j = 0; j < t.cols; ++j) {
      const long long nij = t.counts[static_cast<std::size_t>(i) * t.cols + j];
      if (nij <= 0) continue;
      info += (static_cast<double>(nij) / t.n) *
              std::log(static_cast<double>(t.n) * nij /
                       (static_cast<double>(t.a[i]) * t.b[j]));
    }
  }
  return info;
}

/// True when the partitions are identical up to relabeling: the table is a
/// bijection between row and column labels.
bool is_bijection(const Contingency& t) {
  if (t.rows != t.cols) return false;
  for (int i = 0; i < t.rows; ++i) {
    int nonzero = 0;
    for (int j = 0; j < t.cols; ++j) {
      if (t.counts[static_cast<std::size_t>(i) * t.cols + j] > 0) ++nonzero;
    }
    if (nonzero != 1) return false;
  }
  for (int j = 0; j < t.cols; ++j) {
    int nonzero = 0;
    for (int i = 0; i < t.rows; ++i) {
      if (t.counts[static_cast<std::size_t>(i) * t.cols + j] > 0) ++nonzero;
    }
    if (nonzero != 1) return false;
  }
  return true;
}

/// Expected mutual information under the hypergeometric null model.
double expected_mutual_information(const Contingency& t) {
  const long long n = t.n;
  std::vector<double> lgamma_table(static_cast<std::size_t>(n) + 2);
  for (long long k = 0; k <= n + 1; ++k) {
    lgamma_table[k] = std::lgamma(static_cast<double>(k) + 1.0);
  }
  auto lf = [&](long long k) { return lgamma_table[static_cast<std::size_t>(k)]; };

  double emi = 0.0;
  for (int i = 0; i < t.rows; ++i) {
    const long long ai = t.a[i];
    for (int j = 0; j < t.cols; ++j) {
      const long long bj = t.b[j];
      const long long lo = std::max<long long>(1, ai + bj - n);
      const long long hi = std::min(ai, bj);
      for (long long nij = lo; nij <= hi; ++nij) {
        const double log_p = lf(ai) + lf(bj) + lf(n - ai) + lf(n - bj) - lf(n) -
                             lf(nij) - lf(ai - nij) - lf(bj - nij) -
                             lf(n - ai - bj + nij);
        emi += (static_cast<double>(nij) / n) *
               std::log(static_cast<double>(n) * nij /
                        (static_cast<double>(ai) * bj)) *
               std::exp(log_p);
      }
    }
  }
  return emi;
}

}  // namespace

double nmi(const std::vector<int>& u, const std::vector<int>& v) {
  const Contingency t = pair_counting(u, v);
  if (is_bijection(t)) return 1.0;
  const double hu = entropy(t.a, t.n);
  const double hv = entropy(t.b, t.n);
  if (hu <= 0.0 || hv <= 0.0) return 0.0;  // differing partitions, one trivial
  return mutual_information(t) / std::sqrt(hu * hv);
}

double ami(const std::vector<int>& u, const std::vector<int>& v) {
  const Contingency t = pair_counting(u, v);
  if (is_bijection(t)) return 1.0;
  const double hu = entropy(t.a, t.n);
  const double hv = entropy(t.b, t.n);
  const double info = mutual_information(t);
  const double emi = expected_mutual_information(t);
  const double denom = std::max(hu, hv) - emi;
  if (denom == 0.0) return 0.0;
  return (info - emi) / denom;
}

double ari(const std::vector<int>& u, const std::vector<int>& v) {
  const Contingency t = pair_counting(u, v);
  if (is_bijection(t)) return 1.0;
  double sum_a = 0.0, sum_b = 0.0;
  for (const long long ai : t.a) sum_a += static_cast<double>(ai) * (ai - 1) / 2.0;
  for (const long long bj : t.b) sum_b += static_cast<double>(bj) * (bj - 1) / 2.0;
  const double total_pairs = static_cast<double>(t.n) * (t.n - 1) / 2.0;
  if (total_pairs == 0.0) return 1.0;
  const double expected = sum_a * sum_b / total_pairs;
  const double denom = 0.5 * (sum_a + sum_b) - expected;
  if (denom == 0.0) return 0.0;
  return (static_cast<double>(t.pair_sum) - expected) / denom;
}

MetricsReport evaluate_all(const EvalPair& eval) {
  MetricsReport r;
  r.iou = iou(eval);
  r.point_acc = point_accuracy(eval);
  r.object_acc = object_accuracy(eval);
  r.nmi = nmi(eval);
  r.ami = ami(eval);
  r.ari = ari(eval);
  return r;
}

void write_report(const std::string& path, const MetricsReport& report,
                  const std::array<std::string, kNumClasses>& class_names) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report: " + path);
  char buf[160];
  out << "class,iou\n";
  for (int c = 0; c < kNumClasses; ++c) {
    if (!report.iou.defined[c]) continue;
    std::snprintf(buf, sizeof(buf), "%s,%.6f\n", class_names[c].c_str(),
                  report.iou.per_class[c]);
    out << buf;
  }
  out << "meanIOU,pointAcc,objAcc,NMI,AMI,ARI\n";
  std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n",
                report.iou.mean, report.point_acc, report.object_acc,
                report.nmi, report.ami, report.ari);
  out << buf;
  if (!out) throw std::runtime_error("report write failed: " + path);
}

}  // namespace mcpseg
