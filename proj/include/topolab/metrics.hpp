#pragma once

#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

#include "topolab/common.hpp"
#include "topolab/topology.hpp"

namespace topolab {

struct ClassMetrics {
  std::string name;
  long support = 0;
  long predicted = 0;
  long tp = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool precision_defined = true;  // false: zero denominator, value reported as 0
  bool recall_defined = true;
  bool f1_defined = true;
};

struct MetricsReport {
  std::vector<ClassMetrics> per_class;
  double weighted_precision = 0.0;
  double weighted_recall = 0.0;
  double weighted_f1 = 0.0;
  long total_segments = 0;
  long total_connections = 0;
  long violating_connections = 0;
  double viola = 0.0;
  bool viola_defined = true;  // false: no connections at all
  long cases = 0;
  long violating_cases = 0;
  double viola_c = 0.0;
};

// Weighted P/R/F1 with ground-truth supports as weights; zero-support classes
// are excluded from the weighted averages.
inline MetricsReport classification_metrics(const std::vector<int>& pred,
                                            const std::vector<int>& gold,
                                            const CategoryTopology& topo) {
  if (pred.size() != gold.size())
    throw InputError("classification_metrics: prediction/gold length mismatch");
  int k = topo.class_count();
  for (int c : pred)
    if (c < 0 || c >= k) throw UnknownClassError("prediction contains an out-of-range class index");
  for (int c : gold)
    if (c < 0 || c >= k) throw UnknownClassError("gold contains an out-of-range class index");

  MetricsReport rep;
  rep.total_segments = static_cast<long>(pred.size());
  rep.per_class.resize(k);
  for (int c = 0; c < k; ++c) rep.per_class[c].name = topo.classes[c];
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ++rep.per_class[gold[i]].support;
    ++rep.per_class[pred[i]].predicted;
    if (pred[i] == gold[i]) ++rep.per_class[pred[i]].tp;
  }
  long total_support = 0;
  double wp = 0.0, wr = 0.0, wf = 0.0;
  for (auto& m : rep.per_class) {
    if (m.predicted > 0) {
      m.precision = static_cast<double>(m.tp) / m.predicted;
    } else {
      m.precision = 0.0;
      m.precision_defined = false;
    }
    if (m.support > 0) {
      m.recall = static_cast<double>(m.tp) / m.support;
    } else {
      m.recall = 0.0;
      m.recall_defined = false;
    }
    if (m.precision + m.recall > 0.0) {
      m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    } else {
      m.f1 = 0.0;
      m.f1_defined = false;
    }
    if (m.support > 0) {
      total_support += m.support;
      wp += m.support * m.precision;
      wr += m.support * m.recall;
      wf += m.support * m.f1;
    }
  }
  if (total_support > 0) {
    rep.weighted_precision = wp / total_support;
    rep.weighted_recall = wr / total_support;
    rep.weighted_f1 = wf / total_support;
  }
  return rep;
}

// A connection (i, j) violates when (pred[i], pred[j]) is not an edge or a
// self-pair of the category topology. Directed by default; the undirected
// variant also accepts the reversed pair.
inline long count_violations(const std::vector<int>& pred,
                             const std::vector<std::pair<int, int>>& connections,
                             const CategoryTopology& topo, bool undirected = false) {
  long bad = 0;
  for (const auto& [i, j] : connections) {
    if (i < 0 || j < 0 || i >= static_cast<int>(pred.size()) || j >= static_cast<int>(pred.size()))
      throw InputError("count_violations: connection index out of range");
    const std::string& a = topo.classes.at(pred[i]);
    const std::string& b = topo.classes.at(pred[j]);
    bool ok = topo.is_valid_connection(a, b);
    if (!ok && undirected) ok = topo.is_valid_connection(b, a);
    if (!ok) ++bad;
  }
  return bad;
}

inline double viola_case_fraction(const std::vector<long>& per_case_violations) {
  if (per_case_violations.empty()) throw EmptyInputError("viola_case: no cases");
  long bad = 0;
  for (long v : per_case_violations)
    if (v > 0) ++bad;
  return static_cast<double>(bad) / static_cast<double>(per_case_violations.size());
}

struct CaseEvaluation {
  std::vector<int> pred;
  std::vector<int> gold;
  std::vector<std::pair<int, int>> connections;
};

inline MetricsReport evaluate(const std::vector<CaseEvaluation>& cases,
                              const CategoryTopology& topo, bool undirected_viola = false) {
  if (cases.empty()) throw EmptyInputError("evaluate: no cases");
  std::vector<int> all_pred, all_gold;
  std::vector<long> per_case;
  long total_conn = 0, total_bad = 0;
  for (const auto& ce : cases) {
    if (ce.pred.size() != ce.gold.size())
      throw InputError("evaluate: prediction/gold length mismatch in a case");
    all_pred.insert(all_pred.end(), ce.pred.begin(), ce.pred.end());
    all_gold.insert(all_gold.end(), ce.gold.begin(), ce.gold.end());
    long bad = count_violations(ce.pred, ce.connections, topo, undirected_viola);
    per_case.push_back(bad);
    total_conn += static_cast<long>(ce.connections.size());
    total_bad += bad;
  }
  MetricsReport rep = classification_metrics(all_pred, all_gold, topo);
  rep.total_connections = total_conn;
  rep.violating_connections = total_bad;
  if (total_conn > 0) {
    rep.viola = static_cast<double>(total_bad) / static_cast<double>(total_conn);
  } else {
    rep.viola = 0.0;
    rep.viola_defined = false;
  }
  rep.cases = static_cast<long>(cases.size());
  for (long v : per_case)
    if (v > 0) ++rep.violating_cases;
  rep.viola_c = static_cast<double>(rep.violating_cases) / static_cast<double>(rep.cases);
  return rep;
}

inline std::string format_table(const MetricsReport& rep) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-8s %8s %10s %10s %10s\n", "class", "support", "precision",
                "recall", "f1");
  out += line;
  for (const auto& m : rep.per_class) {
    std::snprintf(line, sizeof(line), "%-8s %8ld %10.4f %10.4f %10.4f%s\n", m.name.c_str(),
                  m.support, m.precision, m.recall, m.f1,
                  (m.precision_defined && m.recall_defined) ? "" : "  (zero denominator)");
    out += line;
  }
  std::snprintf(line, sizeof(line), "%-8s %8ld %10.4f %10.4f %10.4f\n", "weighted",
                rep.total_segments, rep.weighted_precision, rep.weighted_recall, rep.weighted_f1);
  out += line;
  std::snprintf(line, sizeof(line), "viola   %.4f (%ld/%ld connections)%s\n", rep.viola,
                rep.violating_connections, rep.total_connections,
                rep.viola_defined ? "" : "  (no connections)");
  out += line;
  std::snprintf(line, sizeof(line), "viola_c %.4f (%ld/%ld cases)\n", rep.viola_c,
                rep.violating_cases, rep.cases);
  out += line;
  return out;
}

}  // namespace topolab
