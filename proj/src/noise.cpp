#include <algorithm>
#include <cmath>

#include "rng.hpp"
#include "w2s/data.hpp"
#include "w2s/errors.hpp"

namespace w2s {

std::map<int, int> cifar10_flip_map() {
  // 0 airplane, 1 automobile, 2 bird, 3 cat, 5 dog, 9 truck
  return {{9, 1}, {2, 0}, {3, 5}, {5, 3}};
}

void NoiseSpec::validate() const {
  if (!(ratio >= 0.0 && ratio <= 1.0)) {
    throw ConfigError("noise ratio must lie in [0,1], got " + std::to_string(ratio));
  }
}

std::size_t noise_count(double ratio, std::size_t n) {
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
}

namespace {

// Next class within the same super-class, wrapping around; classes ordered by id.
std::vector<int> circular_map(const Dataset& ds) {
  std::vector<int> coarse_of(ds.num_classes, -1);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto fine = static_cast<std::size_t>(ds.labels[i]);
    const int coarse = (*ds.coarse_labels)[i];
    if (coarse_of[fine] != -1 && coarse_of[fine] != coarse) {
      throw ConfigError("class " + std::to_string(fine) + " belongs to several super-classes");
    }
    coarse_of[fine] = coarse;
  }
  std::map<int, std::vector<int>> members;
  for (std::size_t c = 0; c < coarse_of.size(); ++c)
    if (coarse_of[c] != -1) members[coarse_of[c]].push_back(static_cast<int>(c));
  std::vector<int> next(ds.num_classes, -1);
  for (const auto& [coarse, classes] : members) {
    if (classes.size() < 2) continue;
    for (std::size_t j = 0; j < classes.size(); ++j)
      next[static_cast<std::size_t>(classes[j])] = classes[(j + 1) % classes.size()];
  }
  return next;
}

}  // namespace

Dataset inject_noise(const Dataset& ds, const NoiseSpec& spec, NoiseReport* report) {
  spec.validate();
  Dataset out = ds;  // images are shared, labels copied
  NoiseReport local;
  NoiseReport& rep = report ? *report : local;
  rep = NoiseReport{};

  if (spec.kind == NoiseKind::Symmetric && ds.num_classes < 2) {
    throw ConfigError("symmetric noise needs at least 2 classes");
  }

  // Class -> replacement for asymmetric modes (-1: not eligible).
  std::vector<int> mapping;
  if (spec.kind == NoiseKind::Asymmetric) {
    if (!spec.flip_map.empty()) {
      mapping.assign(ds.num_classes, -1);
      for (const auto& [from, to] : spec.flip_map) {
        if (from < 0 || to < 0 || static_cast<std::size_t>(from) >= ds.num_classes ||
            static_cast<std::size_t>(to) >= ds.num_classes) {
          throw ConfigError("flip map entry " + std::to_string(from) + "->" + std::to_string(to) +
                            " outside the label space");
        }
        if (from != to) mapping[static_cast<std::size_t>(from)] = to;
      }
    } else if (ds.coarse_labels) {
      mapping = circular_map(ds);
    } else {
      throw ConfigError("asymmetric noise needs a flip map or coarse labels");
    }
  }

  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (spec.kind == NoiseKind::Symmetric || mapping[static_cast<std::size_t>(ds.labels[i])] != -1)
      eligible.push_back(i);
  }
  rep.eligible = eligible.size();
  const std::size_t count = noise_count(spec.ratio, eligible.size());
  rep.selected = count;
  if (count == 0) return out;

  auto rng = detail::make_rng({spec.seed, 0x4E01'5E00ULL});
  const std::vector<std::size_t> order = detail::permutation(eligible.size(), rng);
  std::vector<std::size_t> chosen;
  chosen.reserve(count);
  for (std::size_t j = 0; j < count; ++j) chosen.push_back(eligible[order[j]]);
  std::sort(chosen.begin(), chosen.end());

  const int k = static_cast<int>(ds.num_classes);
  for (auto i : chosen) {
    const int old = ds.labels[i];
    int fresh;
    if (spec.kind == NoiseKind::Symmetric) {
      if (spec.include_original) {
        fresh = static_cast<int>(detail::uniform_index(rng, ds.num_classes));
      } else {
        const int u = static_cast<int>(detail::uniform_index(rng, static_cast<std::size_t>(k - 1)));
        fresh = u < old ? u : u + 1;
      }
    } else {
      fresh = mapping[static_cast<std::size_t>(old)];
    }
    out.labels[i] = fresh;
    if (fresh != old) rep.flips.push_back({i, old, fresh});
  }
  return out;
}

}  // namespace w2s
