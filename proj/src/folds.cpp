#include <algorithm>
#include <map>

#include "dg/error.hpp"
#include "dg/eval.hpp"
#include "dg/rng.hpp"

namespace dg {

FoldPlan::Roles FoldPlan::roles(int iteration) const {
  if (n_folds < 4)
    throw ProtocolError("fold plan needs at least 4 folds for the role map");
  if (iteration < 0 || iteration >= n_folds)
    throw ProtocolError("iteration " + std::to_string(iteration) +
                        " outside 0.." + std::to_string(n_folds - 1));
  Roles r;
  for (int t = 0; t < n_folds - 3; ++t)
    r.train_folds.push_back((iteration + t) % n_folds);
  r.val_fold = (iteration + n_folds - 3) % n_folds;
  r.cal_fold = (iteration + n_folds - 2) % n_folds;
  r.test_fold = (iteration + n_folds - 1) % n_folds;
  return r;
}

std::size_t FoldPlan::total_subjects() const {
  std::size_t n = 0;
  for (const auto& f : folds) n += f.size();
  return n;
}

FoldPlan stratified_folds(const std::vector<int>& labels, int n_folds,
                          std::uint64_t seed) {
  if (n_folds < 2) throw ParameterError("stratified_folds: n_folds must be >= 2");
  if (labels.empty()) throw DataError("stratified_folds: empty label list");

  std::map<int, std::vector<int>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i)
    by_class[labels[i]].push_back(static_cast<int>(i));
  for (const auto& [cls, members] : by_class)
    if (members.size() < static_cast<std::size_t>(n_folds))
      throw DataError("stratified_folds: class " + std::to_string(cls) +
                      " has " + std::to_string(members.size()) +
                      " members, fewer than " + std::to_string(n_folds) +
                      " folds");

  FoldPlan plan;
  plan.n_folds = n_folds;
  plan.seed = seed;
  plan.folds.assign(static_cast<std::size_t>(n_folds), {});

  Rng rng(mix_seed(seed, 0xf01d));
  int extra_offset = 0;
  for (auto& [cls, members] : by_class) {
    rng.shuffle(members);
    const int q = static_cast<int>(members.size()) / n_folds;
    const int r = static_cast<int>(members.size()) % n_folds;
    // fold f receives q members, plus one extra for r folds; the extras
    // rotate across classes so fold totals stay level
    std::size_t next = 0;
    for (int f = 0; f < n_folds; ++f) {
      int take = q;
      const int rel = (f - extra_offset % n_folds + n_folds) % n_folds;
      if (rel < r) ++take;
      for (int t = 0; t < take; ++t)
        plan.folds[static_cast<std::size_t>(f)].push_back(members[next++]);
    }
    extra_offset += r;
  }
  for (auto& fold : plan.folds) std::sort(fold.begin(), fold.end());
  return plan;
}

}  // namespace dg
