#include "rng.hpp"
#include "w2s/data.hpp"
#include "w2s/errors.hpp"

namespace w2s {

Episode sample_episode(const Dataset& ds, const EpisodeSpec& spec, std::size_t episode_index) {
  if (spec.n_way == 0 || spec.k_shot == 0 || spec.q_query == 0) {
    throw ConfigError("episode needs n_way, k_shot and q_query >= 1");
  }
  const auto by_class = ds.indices_by_class();
  std::vector<int> present;
  for (std::size_t c = 0; c < by_class.size(); ++c)
    if (!by_class[c].empty()) present.push_back(static_cast<int>(c));
  if (spec.n_way > present.size()) {
    throw ConfigError(std::to_string(spec.n_way) + "-way episode needs more classes than the " +
                      std::to_string(present.size()) + " available");
  }

  auto rng = detail::make_rng({spec.seed, episode_index, 0xE915'0DE0ULL});
  const auto class_order = detail::permutation(present.size(), rng);
  const std::size_t per_class = spec.k_shot + spec.q_query;

  Episode ep;
  for (std::size_t w = 0; w < spec.n_way; ++w) {
    const int cls = present[class_order[w]];
    const auto& pool = by_class[static_cast<std::size_t>(cls)];
    if (pool.size() < per_class) {
      throw ConfigError("class " + std::to_string(cls) + " has " + std::to_string(pool.size()) +
                        " images, episode needs " + std::to_string(per_class));
    }
    ep.classes.push_back(cls);
    const auto pick = detail::permutation(pool.size(), rng);
    for (std::size_t j = 0; j < spec.k_shot; ++j) {
      ep.support.push_back(pool[pick[j]]);
      ep.support_labels.push_back(static_cast<int>(w));
    }
    for (std::size_t j = spec.k_shot; j < per_class; ++j) {
      ep.query.push_back(pool[pick[j]]);
      ep.query_labels.push_back(static_cast<int>(w));
    }
  }
  return ep;
}

}  // namespace w2s
