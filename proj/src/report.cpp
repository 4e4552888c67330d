#include <charconv>
#include <fstream>
#include <sstream>

#include "w2s/errors.hpp"
#include "w2s/harness.hpp"

namespace w2s {
namespace {

// Shortest representation that round-trips.
std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string opt(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

template <typename T>
std::optional<T> get_opt(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

template <typename T>
void put_opt(nlohmann::json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

}  // namespace

void to_json(nlohmann::json& j, const BetaSummary& b) {
  j = {{"mean", b.mean}, {"frac_half", b.frac_half}, {"count", b.count}, {"histogram", b.histogram}};
}

void from_json(const nlohmann::json& j, BetaSummary& b) {
  b.mean = j.at("mean").get<double>();
  b.frac_half = j.at("frac_half").get<double>();
  b.count = j.at("count").get<std::size_t>();
  b.histogram = j.at("histogram").get<std::array<std::size_t, kBetaBins>>();
}

void to_json(nlohmann::json& j, const EpochSummary& e) {
  j = {{"epoch", e.epoch}, {"lr", e.lr}, {"train_loss", e.train_loss}};
  put_opt(j, "top1", e.top1);
  put_opt(j, "top5", e.top5);
  put_opt(j, "loss", e.loss);
  put_opt(j, "beta", e.beta);
}

void from_json(const nlohmann::json& j, EpochSummary& e) {
  e.epoch = j.at("epoch").get<std::size_t>();
  e.lr = j.at("lr").get<double>();
  e.train_loss = j.at("train_loss").get<double>();
  e.top1 = get_opt<double>(j, "top1");
  e.top5 = get_opt<double>(j, "top5");
  e.loss = get_opt<double>(j, "loss");
  e.beta = get_opt<BetaSummary>(j, "beta");
}

void to_json(nlohmann::json& j, const SeedResult& s) {
  j = {{"seed", s.seed}, {"final_epoch", s.final_epoch}, {"top1", s.top1}, {"epochs", s.epochs}};
  put_opt(j, "top5", s.top5);
  put_opt(j, "loss", s.loss);
  put_opt(j, "ci95", s.ci95);
  put_opt(j, "beta", s.beta);
}

void from_json(const nlohmann::json& j, SeedResult& s) {
  s.seed = j.at("seed").get<std::uint64_t>();
  s.final_epoch = j.at("final_epoch").get<std::size_t>();
  s.top1 = j.at("top1").get<double>();
  s.top5 = get_opt<double>(j, "top5");
  s.loss = get_opt<double>(j, "loss");
  s.ci95 = get_opt<double>(j, "ci95");
  s.beta = get_opt<BetaSummary>(j, "beta");
  s.epochs = j.value("epochs", std::vector<EpochSummary>{});
}

void to_json(nlohmann::json& j, const RunResult& r) {
  const Aggregate t1 = r.top1();
  j = {{"run_id", r.run_id},
       {"kind", to_string(r.kind)},
       {"method", to_string(r.method)},
       {"role", r.role},
       {"split", r.split},
       {"seed_count", r.seeds.size()},
       {"seeds", r.seeds},
       {"top1", {{"mean", t1.mean}, {"std", t1.std}}}};
  if (const auto t5 = r.top5()) j["top5"] = {{"mean", t5->mean}, {"std", t5->std}};
  if (r.delta) {
    j["delta"] = *r.delta;
    j["reference"] = r.reference;
  }
}

void from_json(const nlohmann::json& j, RunResult& r) {
  r.run_id = j.at("run_id").get<std::string>();
  r.kind = kind_from_string(j.at("kind").get<std::string>());
  r.method = method_from_string(j.at("method").get<std::string>());
  r.role = j.at("role").get<std::string>();
  r.split = j.at("split").get<std::string>();
  r.seeds = j.at("seeds").get<std::vector<SeedResult>>();
  r.delta = get_opt<double>(j, "delta");
  r.reference = j.value("reference", std::string());
}

std::string results_csv(const std::vector<RunResult>& runs) {
  std::ostringstream out;
  out << "run_id,kind,method,seed,epoch,split,top1,top5,loss,beta_mean,beta_frac_half\n";
  for (const auto& r : runs) {
    const std::string prefix = r.run_id + "," + to_string(r.kind) + "," + to_string(r.method) + ",";
    for (const auto& s : r.seeds) {
      out << prefix << s.seed << "," << s.final_epoch << "," << r.split << "," << num(s.top1) << ","
          << opt(s.top5) << "," << opt(s.loss) << ","
          << (s.beta ? num(s.beta->mean) : "") << "," << (s.beta ? num(s.beta->frac_half) : "") << "\n";
    }
    if (r.seeds.empty()) continue;
    // Aggregate row: empty seed, means over the seed rows above.
    auto mean_of = [&](auto field) -> std::optional<double> {
      std::vector<double> v;
      for (const auto& s : r.seeds) {
        const std::optional<double> x = field(s);
        if (!x) return std::nullopt;
        v.push_back(*x);
      }
      return aggregate(v).mean;
    };
    out << prefix << "," << r.seeds.back().final_epoch << "," << r.split << "," << num(r.top1().mean) << ","
        << opt(mean_of([](const SeedResult& s) { return s.top5; })) << ","
        << opt(mean_of([](const SeedResult& s) { return s.loss; })) << ","
        << opt(mean_of([](const SeedResult& s) {
             return s.beta ? std::optional<double>(s.beta->mean) : std::nullopt;
           }))
        << ","
        << opt(mean_of([](const SeedResult& s) {
             return s.beta ? std::optional<double>(s.beta->frac_half) : std::nullopt;
           }))
        << "\n";
  }
  return out.str();
}

std::string epochs_csv(const std::vector<RunResult>& runs) {
  std::ostringstream out;
  out << "run_id,seed,epoch,lr,train_loss,val_top1,val_top5,val_loss,beta_mean,beta_frac_half\n";
  for (const auto& r : runs) {
    for (const auto& s : r.seeds) {
      for (const auto& e : s.epochs) {
        out << r.run_id << "," << s.seed << "," << e.epoch + 1 << "," << num(e.lr) << "," << num(e.train_loss)
            << "," << opt(e.top1) << "," << opt(e.top5) << "," << opt(e.loss) << ","
            << (e.beta ? num(e.beta->mean) : "") << "," << (e.beta ? num(e.beta->frac_half) : "") << "\n";
      }
    }
  }
  return out.str();
}

std::string beta_hist_csv(const SeedResult& seed) {
  std::ostringstream out;
  out << "epoch,bin,lo,hi,count\n";
  for (const auto& e : seed.epochs) {
    if (!e.beta) continue;
    for (std::size_t b = 0; b < kBetaBins; ++b) {
      const double lo = static_cast<double>(b) / (2.0 * kBetaBins);
      const double hi = static_cast<double>(b + 1) / (2.0 * kBetaBins);
      out << e.epoch + 1 << "," << b << "," << num(lo) << "," << num(hi) << "," << e.beta->histogram[b] << "\n";
    }
  }
  return out.str();
}

nlohmann::json summary_json(const ExperimentResult& result) {
  return {{"format_version", kReportFormatVersion},
          {"config", result.config},
          {"runs", result.runs},
          {"wall_clock_s", result.wall_clock_s},
          {"complete", result.complete}};
}

void emit_report(const std::vector<RunResult>& runs, const std::filesystem::path& out_dir,
                 const ExperimentResult* summary) {
  write_file(out_dir / "results.csv", results_csv(runs));
  write_file(out_dir / "epochs.csv", epochs_csv(runs));
  for (const auto& r : runs) {
    if (r.method != Method::AdaptConf) continue;
    for (const auto& s : r.seeds) {
      write_file(out_dir / r.run_id / ("seed_" + std::to_string(s.seed)) / "beta_hist.csv", beta_hist_csv(s));
    }
  }
  if (summary) write_file(out_dir / "summary.json", summary_json(*summary).dump(2) + "\n");
}

ExperimentResult read_summary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    const int version = j.at("format_version").get<int>();
    if (version != kReportFormatVersion) {
      throw ConfigError("unsupported summary format_version " + std::to_string(version));
    }
    ExperimentResult r;
    r.config = j.at("config");
    r.runs = j.at("runs").get<std::vector<RunResult>>();
    r.wall_clock_s = j.value("wall_clock_s", 0.0);
    r.complete = j.value("complete", true);
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed summary " + path.string() + ": " + e.what());
  }
}

}  // namespace w2s
