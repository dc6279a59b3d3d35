#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>

#include "kroa/error.hpp"
#include "kroa/roa.hpp"

namespace kroa::roa {

namespace {

double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

double accuracy(const SaddleClassifier& clf, const std::vector<const LabeledPoint*>& points) {
  if (points.empty()) return 0.0;
  std::size_t right = 0;
  for (const auto* p : points) {
    if (clf.accepts(p->x) == (p->label == clf.target)) ++right;
  }
  return static_cast<double>(right) / static_cast<double>(points.size());
}

SaddleClassifier calibrate(const UnitaryEigenfunction& phi, const FixedPointReport& saddle,
                           int saddle_index, const std::vector<const LabeledPoint*>& training,
                           int target) {
  if (!saddle.is_type_one_saddle()) {
    throw InvalidInput("classifier threshold must come from a type-one saddle");
  }
  if (training.empty()) throw InvalidInput("no labeled training points");
  SaddleClassifier clf;
  clf.phi = phi;
  clf.saddle = saddle.location;
  clf.saddle_index = saddle_index;
  clf.threshold = phi.value(saddle.location);
  clf.saddle_branch = phi.branch(saddle.location);
  clf.target = target;
  clf.sigma = 1;
  const double up = accuracy(clf, training);
  clf.sigma = -1;
  const double down = accuracy(clf, training);
  clf.sigma = up >= down ? 1 : -1;
  clf.training_accuracy = std::max(up, down);
  if (!(clf.training_accuracy > 0.5)) {
    throw EmptyResult("eigenfunction does not separate the basin at this saddle (accuracy " +
                      std::to_string(clf.training_accuracy) + ")");
  }
  return clf;
}

}  // namespace

int endpoint_label(const State& final_state, const std::vector<FixedPointReport>& points,
                   double radius) {
  int best = -1;
  double best_distance = radius;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].stability != Stability::AsymptoticallyStable) continue;
    const double dist = (points[i].location - final_state).norm();
    if (dist <= best_distance) {
      best_distance = dist;
      best = static_cast<int>(i);
    }
  }
  return best;
}

double SaddleClassifier::score(const State& x) const {
  const double v = phi.value(x);
  if (phi.branch(x) != saddle_branch) return sigma * (sgn(v) - sgn(threshold));
  return sigma * (v - threshold);
}

SaddleClassifier build_classifier(const UnitaryEigenfunction& phi, const FixedPointReport& saddle,
                                  int saddle_index, const std::vector<LabeledPoint>& training,
                                  int target) {
  std::vector<const LabeledPoint*> resolved;
  for (const auto& p : training) {
    if (p.label >= 0) resolved.push_back(&p);
  }
  return calibrate(phi, saddle, saddle_index, resolved, target);
}

Classification classify_points(const DecisionList& list, const std::vector<State>& points) {
  Classification out;
  out.labels.reserve(points.size());
  out.scores.reserve(points.size());
  for (const auto& x : points) {
    int label = list.residual_label;
    double score = 0.0;
    for (const auto& rule : list.rules) {
      score = rule.score(x);
      if (score >= 0.0) {
        label = rule.target;
        break;
      }
    }
    out.labels.push_back(label);
    out.scores.push_back(score);
  }
  return out;
}

namespace {

/// Residual label: majority among points no rule claims, ignoring labels the
/// rules already target; falls back to the whole training population.
int residual_label(const std::vector<const LabeledPoint*>& unclaimed,
                   const std::vector<const LabeledPoint*>& all, const std::set<int>& done) {
  std::map<int, int> counts;
  for (const auto* p : unclaimed) {
    if (!done.count(p->label)) ++counts[p->label];
  }
  if (counts.empty()) {
    for (const auto* p : all) {
      if (!done.count(p->label)) ++counts[p->label];
    }
  }
  int label = -1;
  int best = 0;
  for (const auto& [l, count] : counts) {
    if (count > best) {
      best = count;
      label = l;
    }
  }
  return label;
}

DecisionList greedy_list(const std::vector<UnitaryEigenfunction>& candidates,
                         const std::vector<FixedPointReport>& points,
                         const std::vector<int>& saddles,
                         const std::vector<const LabeledPoint*>& resolved) {
  std::vector<const LabeledPoint*> remaining = resolved;
  DecisionList list;
  std::set<int> done;
  std::set<int> used_saddles;
  while (list.rules.size() < saddles.size()) {
    std::set<int> labels;
    for (const auto* p : remaining) {
      if (!done.count(p->label)) labels.insert(p->label);
    }
    if (labels.size() < 2) break;
    std::optional<SaddleClassifier> best;
    for (int s : saddles) {
      if (used_saddles.count(s)) continue;
      for (const auto& phi : candidates) {
        for (int target : labels) {
          try {
            SaddleClassifier clf =
                calibrate(phi, points[static_cast<std::size_t>(s)], s, remaining, target);
            if (!best || clf.training_accuracy > best->training_accuracy) best = std::move(clf);
          } catch (const EmptyResult&) {
          }
        }
      }
    }
    if (!best) break;
    used_saddles.insert(best->saddle_index);
    done.insert(best->target);
    std::erase_if(remaining, [&](const LabeledPoint* p) { return best->accepts(p->x); });
    list.rules.push_back(std::move(*best));
  }
  list.residual_label = residual_label(remaining, resolved, done);
  return list;
}

constexpr double kMaxJointLists = 2e5;

}  // namespace

DecisionList build_decision_list(const std::vector<UnitaryEigenfunction>& candidates,
                                 const std::vector<FixedPointReport>& points,
                                 const std::vector<LabeledPoint>& training) {
  std::vector<const LabeledPoint*> resolved;
  for (const auto& p : training) {
    if (p.label >= 0) resolved.push_back(&p);
  }
  std::vector<int> saddles;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].is_type_one_saddle()) saddles.push_back(static_cast<int>(i));
  }
  std::vector<int> labels;
  for (const auto* p : resolved) {
    if (std::find(labels.begin(), labels.end(), p->label) == labels.end()) labels.push_back(p->label);
  }
  std::sort(labels.begin(), labels.end());
  const std::size_t depth = std::min(saddles.size(), labels.empty() ? 0 : labels.size() - 1);
  if (depth == 0 || candidates.empty()) {
    DecisionList list;
    list.residual_label = residual_label(resolved, resolved, {});
    return list;
  }

  // Count the ordered lists: saddle and target arrangements times the choices
  // of eigenfunction and orientation per rule.
  double lists = 1.0;
  for (std::size_t r = 0; r < depth; ++r) {
    lists *= static_cast<double>(saddles.size() - r) * static_cast<double>(labels.size() - r) *
             static_cast<double>(candidates.size()) * 2.0;
  }
  if (lists > kMaxJointLists) return greedy_list(candidates, points, saddles, resolved);

  // Every (saddle, eigenfunction, orientation) rule, decided once per point.
  struct Rule {
    SaddleClassifier clf;
    std::vector<char> accepts;
  };
  std::vector<std::vector<Rule>> rules(saddles.size());
  for (std::size_t s = 0; s < saddles.size(); ++s) {
    const auto& saddle = points[static_cast<std::size_t>(saddles[s])];
    for (const auto& phi : candidates) {
      SaddleClassifier clf;
      clf.phi = phi;
      clf.saddle = saddle.location;
      clf.saddle_index = saddles[s];
      clf.threshold = phi.value(saddle.location);
      clf.saddle_branch = phi.branch(saddle.location);
      for (int sigma : {1, -1}) {
        clf.sigma = sigma;
        Rule rule{clf, std::vector<char>(resolved.size())};
        for (std::size_t i = 0; i < resolved.size(); ++i) {
          rule.accepts[i] = clf.accepts(resolved[i]->x) ? 1 : 0;
        }
        rules[s].push_back(std::move(rule));
      }
    }
  }

  // Each basin carries equal total weight so small basins are not ignored.
  std::map<int, double> basin_size;
  for (const auto* p : resolved) basin_size[p->label] += 1.0;
  std::vector<double> weight(resolved.size());
  for (std::size_t i = 0; i < resolved.size(); ++i) weight[i] = 1.0 / basin_size[resolved[i]->label];

  // Depth-first over ordered (saddle, target, rule) choices; keep the list
  // with the most correct training labels, first found on ties.
  std::vector<std::size_t> pick_saddle;
  std::vector<int> pick_target;
  std::vector<std::size_t> pick_rule;
  std::vector<std::size_t> best_saddle, best_rule;
  std::vector<int> best_target;
  double best_correct = -1;
  int best_residual = -1;
  std::vector<char> used_saddle(saddles.size(), 0);

  std::function<void()> search = [&] {
    if (pick_saddle.size() == depth) {
      std::set<int> done(pick_target.begin(), pick_target.end());
      std::vector<const LabeledPoint*> unclaimed;
      std::vector<int> assigned(resolved.size(), -1);
      for (std::size_t i = 0; i < resolved.size(); ++i) {
        for (std::size_t r = 0; r < depth; ++r) {
          if (rules[pick_saddle[r]][pick_rule[r]].accepts[i]) {
            assigned[i] = pick_target[r];
            break;
          }
        }
        if (assigned[i] < 0) unclaimed.push_back(resolved[i]);
      }
      const int residual = residual_label(unclaimed, resolved, done);
      double correct = 0;
      for (std::size_t i = 0; i < resolved.size(); ++i) {
        const int label = assigned[i] >= 0 ? assigned[i] : residual;
        if (label == resolved[i]->label) correct += weight[i];
      }
      if (correct > best_correct) {
        best_correct = correct;
        best_saddle = pick_saddle;
        best_target = pick_target;
        best_rule = pick_rule;
        best_residual = residual;
      }
      return;
    }
    for (std::size_t s = 0; s < saddles.size(); ++s) {
      if (used_saddle[s]) continue;
      used_saddle[s] = 1;
      for (int target : labels) {
        if (std::find(pick_target.begin(), pick_target.end(), target) != pick_target.end()) continue;
        for (std::size_t r = 0; r < rules[s].size(); ++r) {
          pick_saddle.push_back(s);
          pick_target.push_back(target);
          pick_rule.push_back(r);
          search();
          pick_saddle.pop_back();
          pick_target.pop_back();
          pick_rule.pop_back();
        }
      }
      used_saddle[s] = 0;
    }
  };
  search();

  DecisionList list;
  list.residual_label = best_residual;
  std::vector<const LabeledPoint*> remaining = resolved;
  for (std::size_t r = 0; r < depth; ++r) {
    const Rule& rule = rules[best_saddle[r]][best_rule[r]];
    SaddleClassifier clf = rule.clf;
    clf.target = best_target[r];
    // Accuracy of this rule on the points that reach it, as in calibration.
    std::size_t right = 0;
    for (const auto* p : remaining) {
      if (clf.accepts(p->x) == (p->label == clf.target)) ++right;
    }
    clf.training_accuracy =
        remaining.empty() ? 0.0 : static_cast<double>(right) / static_cast<double>(remaining.size());
    std::erase_if(remaining, [&](const LabeledPoint* p) { return clf.accepts(p->x); });
    list.rules.push_back(std::move(clf));
  }
  return list;
}

}  // namespace kroa::roa
