#include "w2s/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iterator>

#include "rng.hpp"
#include "w2s/errors.hpp"

namespace w2s {

Shape Dataset::image_shape() const {
  const auto& s = images.shape();
  return Shape(s.begin() + 1, s.end());
}

void Dataset::validate() const {
  if (labels.empty()) throw ContractError("dataset '" + name + "' is empty");
  if (images.rank() != 4 || images.dim(0) != labels.size()) {
    throw ShapeError("dataset '" + name + "': images " + shape_str(images.shape()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= num_classes) {
      throw ContractError("dataset '" + name + "': label " + std::to_string(l) + " outside [0," +
                          std::to_string(num_classes) + ")");
    }
  }
  if (coarse_labels) {
    if (coarse_labels->size() != labels.size()) {
      throw ShapeError("dataset '" + name + "': coarse label count mismatch");
    }
    for (int c : *coarse_labels)
      if (c < 0 || c >= 20) throw ContractError("coarse label outside [0,20)");
  }
}

Tensor<float> Dataset::gather(std::span<const std::size_t> indices) const {
  const Shape img = image_shape();
  const std::size_t per = numel(img);
  std::vector<float> out(indices.size() * per);
  auto src = images.data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= size()) throw ContractError("sample index out of range");
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(indices[i] * per), per,
                out.begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  Shape shape{indices.size()};
  shape.insert(shape.end(), img.begin(), img.end());
  return Tensor<float>(std::move(shape), std::move(out));
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.name = name;
  out.num_classes = num_classes;
  out.images = gather(indices);
  out.labels.reserve(indices.size());
  for (auto i : indices) out.labels.push_back(labels[i]);
  if (coarse_labels) {
    std::vector<int> coarse;
    coarse.reserve(indices.size());
    for (auto i : indices) coarse.push_back((*coarse_labels)[i]);
    out.coarse_labels = std::move(coarse);
  }
  return out;
}

std::vector<std::size_t> Dataset::label_histogram() const {
  std::vector<std::size_t> h(num_classes, 0);
  for (int l : labels) ++h[static_cast<std::size_t>(l)];
  return h;
}

std::vector<std::vector<std::size_t>> Dataset::indices_by_class() const {
  std::vector<std::vector<std::size_t>> by(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) by[static_cast<std::size_t>(labels[i])].push_back(i);
  return by;
}

std::string to_string(Format format) {
  switch (format) {
    case Format::IDX: return "idx";
    case Format::CIFAR10: return "cifar10";
    case Format::CIFAR100: return "cifar100";
  }
  return "?";
}

Format format_from_string(const std::string& name) {
  if (name == "idx" || name == "IDX" || name == "mnist") return Format::IDX;
  if (name == "cifar10" || name == "CIFAR10") return Format::CIFAR10;
  if (name == "cifar100" || name == "CIFAR100") return Format::CIFAR100;
  throw ConfigError("unknown dataset format '" + name + "'");
}

namespace {

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  if (offset + 4 > bytes.size()) throw ParseError("truncated header", bytes.size());
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b, 4);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

std::size_t infer_classes(const std::vector<int>& labels) {
  int m = 0;
  for (int l : labels) m = std::max(m, l);
  return static_cast<std::size_t>(m) + 1;
}

}  // namespace

Tensor<float> parse_idx_images(std::span<const std::uint8_t> bytes) {
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kIdxImages) throw ParseError("bad magic for IDX images", 0);
  const std::size_t n = read_be32(bytes, 4), h = read_be32(bytes, 8), w = read_be32(bytes, 12);
  if (n == 0 || h == 0 || w == 0) throw ParseError("zero dimension in IDX header", 4);
  const std::size_t need = 16 + n * h * w;
  if (bytes.size() < need) throw ParseError("truncated IDX image data", bytes.size());
  if (bytes.size() > need) throw ParseError("trailing bytes after IDX image data", need);
  std::vector<float> pixels(n * h * w);
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<float>(bytes[16 + i]) / 255.0f;
  return Tensor<float>({n, 1, h, w}, std::move(pixels));
}

std::vector<int> parse_idx_labels(std::span<const std::uint8_t> bytes) {
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kIdxLabels) throw ParseError("bad magic for IDX labels", 0);
  const std::size_t n = read_be32(bytes, 4);
  if (n == 0) throw ParseError("zero dimension in IDX header", 4);
  const std::size_t need = 8 + n;
  if (bytes.size() < need) throw ParseError("truncated IDX label data", bytes.size());
  if (bytes.size() > need) throw ParseError("trailing bytes after IDX label data", need);
  return std::vector<int>(bytes.begin() + 8, bytes.end());
}

void parse_cifar(std::span<const std::uint8_t> bytes, Format format, std::vector<float>& pixels,
                 std::vector<int>& labels, std::vector<int>& coarse) {
  if (format == Format::IDX) throw ConfigError("parse_cifar called with IDX format");
  const std::size_t label_bytes = format == Format::CIFAR10 ? 1 : 2;
  const std::size_t record = label_bytes + 3072;
  if (bytes.empty()) throw ParseError("empty CIFAR file", 0);
  if (bytes.size() % record != 0) {
    throw ParseError("truncated CIFAR record", bytes.size() - bytes.size() % record);
  }
  const std::size_t limit = format == Format::CIFAR10 ? 10 : 100;
  for (std::size_t off = 0; off < bytes.size(); off += record) {
    if (format == Format::CIFAR100) {
      if (bytes[off] >= 20) throw ParseError("coarse label out of range", off);
      coarse.push_back(bytes[off]);
    }
    const std::uint8_t fine = bytes[off + label_bytes - 1];
    if (fine >= limit) throw ParseError("label out of range", off + label_bytes - 1);
    labels.push_back(fine);
    for (std::size_t i = 0; i < 3072; ++i)
      pixels.push_back(static_cast<float>(bytes[off + label_bytes + i]) / 255.0f);
  }
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 LoadReport* report) {
  Dataset ds;
  ds.name = images.filename().string();
  ds.images = parse_idx_images(read_file(images));
  ds.labels = parse_idx_labels(read_file(labels));
  if (ds.labels.size() != ds.images.dim(0)) {
    throw ParseError("IDX label count " + std::to_string(ds.labels.size()) +
                         " does not match image count " + std::to_string(ds.images.dim(0)),
                     4);
  }
  ds.num_classes = infer_classes(ds.labels);
  ds.validate();
  if (report) {
    report->files = {images, labels};
    report->records = ds.size();
    report->histogram = ds.label_histogram();
  }
  return ds;
}

Dataset load_cifar(const std::vector<std::filesystem::path>& files, Format format,
                   LoadReport* report) {
  std::vector<float> pixels;
  std::vector<int> labels, coarse;
  for (const auto& f : files) parse_cifar(read_file(f), format, pixels, labels, coarse);
  Dataset ds;
  ds.name = to_string(format);
  ds.images = Tensor<float>({labels.size(), 3, 32, 32}, std::move(pixels));
  ds.labels = std::move(labels);
  if (format == Format::CIFAR100) ds.coarse_labels = std::move(coarse);
  ds.num_classes = format == Format::CIFAR10 ? 10 : 100;
  ds.validate();
  if (report) {
    report->files = files;
    report->records = ds.size();
    report->histogram = ds.label_histogram();
  }
  return ds;
}

Dataset load_dataset(const std::filesystem::path& root, Format format, Split split,
                     LoadReport* report) {
  const bool train = split == Split::Train;
  switch (format) {
    case Format::IDX:
      return load_idx(root / (train ? "train-images-idx3-ubyte" : "t10k-images-idx3-ubyte"),
                      root / (train ? "train-labels-idx1-ubyte" : "t10k-labels-idx1-ubyte"), report);
    case Format::CIFAR10: {
      std::vector<std::filesystem::path> files;
      if (train) {
        for (int i = 1; i <= 5; ++i) files.push_back(root / ("data_batch_" + std::to_string(i) + ".bin"));
      } else {
        files.push_back(root / "test_batch.bin");
      }
      return load_cifar(files, format, report);
    }
    case Format::CIFAR100:
      return load_cifar({root / (train ? "train.bin" : "test.bin")}, format, report);
  }
  throw ConfigError("unsupported format");
}

void write_idx(const Dataset& ds, const std::filesystem::path& images,
               const std::filesystem::path& labels) {
  const Shape img = ds.image_shape();
  if (img[0] != 1) throw ConfigError("IDX export supports single-channel images only");
  std::ofstream im(images, std::ios::binary);
  std::ofstream lb(labels, std::ios::binary);
  if (!im || !lb) throw IoError("cannot write IDX files");
  write_be32(im, kIdxImages);
  write_be32(im, static_cast<std::uint32_t>(ds.size()));
  write_be32(im, static_cast<std::uint32_t>(img[1]));
  write_be32(im, static_cast<std::uint32_t>(img[2]));
  for (float v : ds.images.data()) {
    const long q = std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f);
    im.put(static_cast<char>(q));
  }
  write_be32(lb, kIdxLabels);
  write_be32(lb, static_cast<std::uint32_t>(ds.size()));
  for (int l : ds.labels) {
    if (l < 0 || l > 255) throw ConfigError("IDX labels must fit in one byte");
    lb.put(static_cast<char>(l));
  }
  if (!im || !lb) throw IoError("write failed");
}

std::filesystem::path data_root(const std::optional<std::string>& override_dir) {
  if (override_dir && !override_dir->empty()) return *override_dir;
  if (const char* env = std::getenv("W2S_DATA_DIR"); env && *env) return env;
  return std::filesystem::current_path() / "data";
}

Dataset synth_blobs(const SynthSpec& spec) {
  if (spec.num_classes < 2) throw ConfigError("synth_blobs needs at least 2 classes");
  if (spec.per_class == 0) throw ConfigError("synth_blobs needs per_class >= 1");
  if (spec.modes_per_class == 0) throw ConfigError("synth_blobs needs modes_per_class >= 1");
  if (spec.image_shape.size() != 3 || numel(spec.image_shape) == 0) {
    throw ConfigError("synth_blobs image_shape must be (C, H, W)");
  }
  if (!(spec.spread >= 0.0)) throw ConfigError("synth_blobs spread must be non-negative");

  const std::size_t dim = numel(spec.image_shape);
  const std::size_t k = spec.num_classes, modes = spec.modes_per_class;
  auto rng = detail::make_rng({spec.seed, 0x5157'4e54ULL});
  std::normal_distribution<double> gauss(0.0, 1.0);

  // means[c * modes + m]
  std::vector<std::vector<double>> means(k * modes, std::vector<double>(dim, 0.0));
  if (modes == 1 && dim >= k) {
    for (std::size_t c = 0; c < k; ++c) means[c][c] = 1.0;
  } else {
    for (auto& m : means) {
      double norm = 0;
      for (auto& v : m) {
        v = gauss(rng);
        norm += v * v;
      }
      norm = std::sqrt(norm);
      for (auto& v : m) v /= norm;
    }
  }

  const double bound = 1.0 + 6.0 * spec.spread;
  const std::size_t n = k * spec.per_class;
  std::vector<float> pixels(n * dim);
  std::vector<int> labels(n);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < spec.per_class; ++i) {
      const std::size_t row = c * spec.per_class + i;
      const auto& mu = means[c * modes + (modes == 1 ? 0 : detail::uniform_index(rng, modes))];
      labels[row] = static_cast<int>(c);
      for (std::size_t d = 0; d < dim; ++d) {
        const double x = mu[d] + spec.spread * gauss(rng);
        pixels[row * dim + d] = static_cast<float>(std::clamp(0.5 + 0.5 * x / bound, 0.0, 1.0));
      }
    }
  }
  Dataset ds;
  ds.name = "synth_blobs";
  Shape shape{n};
  shape.insert(shape.end(), spec.image_shape.begin(), spec.image_shape.end());
  ds.images = Tensor<float>(std::move(shape), std::move(pixels));
  ds.labels = std::move(labels);
  ds.num_classes = k;
  return ds;
}

std::vector<Dataset> split_classes(const Dataset& ds, const std::vector<std::vector<int>>& class_lists) {
  std::vector<int> owner(ds.num_classes, -1);
  std::vector<int> dense(ds.num_classes, -1);
  for (std::size_t s = 0; s < class_lists.size(); ++s) {
    if (class_lists[s].empty()) throw ConfigError("split " + std::to_string(s) + " has no classes");
    for (std::size_t j = 0; j < class_lists[s].size(); ++j) {
      const int c = class_lists[s][j];
      if (c < 0 || static_cast<std::size_t>(c) >= ds.num_classes) {
        throw ConfigError("split class " + std::to_string(c) + " does not exist");
      }
      if (owner[static_cast<std::size_t>(c)] != -1) {
        throw ConfigError("class " + std::to_string(c) + " appears in more than one split");
      }
      owner[static_cast<std::size_t>(c)] = static_cast<int>(s);
      dense[static_cast<std::size_t>(c)] = static_cast<int>(j);
    }
  }
  std::vector<std::vector<std::size_t>> members(class_lists.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const int o = owner[static_cast<std::size_t>(ds.labels[i])];
    if (o >= 0) members[static_cast<std::size_t>(o)].push_back(i);
  }
  std::vector<Dataset> out;
  for (std::size_t s = 0; s < class_lists.size(); ++s) {
    if (members[s].empty()) throw ConfigError("split " + std::to_string(s) + " has no samples");
    Dataset part = ds.subset(members[s]);
    for (auto& l : part.labels) l = dense[static_cast<std::size_t>(l)];
    part.num_classes = class_lists[s].size();
    part.name = ds.name + "/split" + std::to_string(s);
    out.push_back(std::move(part));
  }
  return out;
}

std::vector<Batch> make_batches(const Dataset& ds, std::size_t batch_size, std::uint64_t seed,
                                std::size_t epoch, const AugmentSpec& augment) {
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  auto rng = detail::make_rng({seed, epoch, 0xBA7C'0000ULL});
  const std::vector<std::size_t> order = detail::permutation(ds.size(), rng);
  const Shape img = ds.image_shape();
  const std::size_t c = img[0], h = img[1], w = img[2], per = c * h * w;
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(augment.crop_pad);

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    Batch b;
    b.indices.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + batch_size)));
    b.images = ds.gather(b.indices);
    for (auto i : b.indices) b.labels.push_back(ds.labels[i]);
    if (augment.enabled) {
      auto data = b.images.data();
      std::vector<float> src(per);
      for (std::size_t s = 0; s < b.indices.size(); ++s) {
        float* dst = data.data() + s * per;
        std::copy_n(dst, per, src.begin());
        const bool flip = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
        const std::ptrdiff_t dy = std::uniform_int_distribution<std::ptrdiff_t>(-pad, pad)(rng);
        const std::ptrdiff_t dx = std::uniform_int_distribution<std::ptrdiff_t>(-pad, pad)(rng);
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
              const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + dy;
              std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x) + dx;
              float v = 0.0f;
              if (sy >= 0 && sy < static_cast<std::ptrdiff_t>(h) && sx >= 0 &&
                  sx < static_cast<std::ptrdiff_t>(w)) {
                if (flip) sx = static_cast<std::ptrdiff_t>(w) - 1 - sx;
                v = src[(ch * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx)];
              }
              dst[(ch * h + y) * w + x] = v;
            }
      }
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

std::vector<Batch> ordered_batches(const Dataset& ds, std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < ds.size(); start += batch_size) {
    Batch b;
    for (std::size_t i = start; i < std::min(ds.size(), start + batch_size); ++i) {
      b.indices.push_back(i);
      b.labels.push_back(ds.labels[i]);
    }
    b.images = ds.gather(b.indices);
    batches.push_back(std::move(b));
  }
  return batches;
}

}  // namespace w2s
