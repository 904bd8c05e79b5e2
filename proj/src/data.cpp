#include "snnd/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>

#include "snnd/bytesio.hpp"
#include "snnd/error.hpp"
#include "snnd/parse.hpp"
#include "snnd/rng.hpp"

namespace snnd {

void validate(const SynthConfig& cfg) {
  if (cfg.classes < 2) throw ConfigError("synthetic: classes must be >= 2");
  if (cfg.features < 1) throw ConfigError("synthetic: features must be >= 1");
  if (cfg.timesteps < 1) throw ConfigError("synthetic: timesteps must be >= 1");
  if (cfg.samples_per_class < 1)
    throw ConfigError("synthetic: samples_per_class must be >= 1");
  if (cfg.rate_lo < Real(0) || cfg.rate_hi > Real(1) ||
      !(cfg.rate_lo < cfg.rate_hi))
    throw ConfigError(
        "synthetic: rates must satisfy 0 <= rate_lo < rate_hi <= 1");
}

namespace {

// Informative features per timestep, ramping from features/16 up to
// features/4 (at least one). Later timesteps see strictly more evidence.
int informative_count(const SynthConfig& cfg, int step) {
  const double span = cfg.timesteps > 1 ? double(cfg.timesteps - 1) : 1.0;
  const double frac = 1.0 / 16.0 + (1.0 / 4.0 - 1.0 / 16.0) * step / span;
  const long n = std::lround(double(cfg.features) * frac);
  return static_cast<int>(std::clamp<long>(n, 1, cfg.features));
}

}  // namespace

RateProfiles synthetic_profiles(const SynthConfig& cfg) {
  validate(cfg);
  Rng rng(mix_seed(cfg.seed, 0x70726F66ULL));  // profile stream

  std::vector<int> perm(static_cast<std::size_t>(cfg.features));
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);

  RateProfiles p;
  p.classes = cfg.classes;
  p.timesteps = cfg.timesteps;
  p.features = cfg.features;
  p.rates.assign(static_cast<std::size_t>(cfg.classes) * cfg.timesteps *
                     cfg.features,
                 cfg.rate_lo);

  const auto draw_class = [&](int cls) {
    for (int t = 0; t < cfg.timesteps; ++t) {
      const int n_inf = informative_count(cfg, t);
      for (int i = 0; i < n_inf; ++i) {
        const int d = perm[static_cast<std::size_t>(i)];
        const std::size_t at = static_cast<std::size_t>(
            (cls * cfg.timesteps + t) * cfg.features + d);
        p.rates[at] = rng.bernoulli(0.5) ? cfg.rate_hi : cfg.rate_lo;
      }
    }
  };
  const auto same_class = [&](int a, int b) {
    const std::size_t stride =
        static_cast<std::size_t>(cfg.timesteps) * cfg.features;
    return std::equal(p.rates.begin() + a * stride,
                      p.rates.begin() + (a + 1) * stride,
                      p.rates.begin() + b * stride);
  };

  for (int cls = 0; cls < cfg.classes; ++cls) {
    int attempts = 0;
    for (;;) {
      draw_class(cls);
      bool collision = false;
      for (int prev = 0; prev < cls && !collision; ++prev)
        collision = same_class(cls, prev);
      if (!collision) break;
      if (++attempts > 200)
        throw ConfigError(
            "synthetic: cannot draw distinct class signatures; "
            "increase features or timesteps");
    }
  }
  return p;
}

Dataset generate_synthetic(const SynthConfig& cfg) {
  const RateProfiles profiles = synthetic_profiles(cfg);
  Rng rng(mix_seed(cfg.seed, 0x73616D70ULL));  // sample stream

  Dataset ds;
  ds.n = static_cast<Index>(cfg.classes) * cfg.samples_per_class;
  ds.t = cfg.timesteps;
  ds.d = cfg.features;
  ds.num_classes = cfg.classes;
  ds.lo = Real(0);
  ds.hi = Real(1);
  ds.values.resize(static_cast<std::size_t>(ds.n * ds.t * ds.d));
  ds.labels.resize(static_cast<std::size_t>(ds.n));

  std::size_t at = 0;
  for (Index s = 0; s < ds.n; ++s) {
    const int cls = static_cast<int>(s / cfg.samples_per_class);
    ds.labels[static_cast<std::size_t>(s)] = cls;
    for (int t = 0; t < cfg.timesteps; ++t)
      for (int d = 0; d < cfg.features; ++d)
        ds.values[at++] =
            rng.bernoulli(double(profiles.at(cls, t, d))) ? Real(1) : Real(0);
  }
  return ds;
}

namespace {
constexpr char kEvfMagic[] = "EVF1";
constexpr std::uint8_t kEvfVersion = 1;
}  // namespace

void save_event_frames(const std::string& path, Index n, Index t, Index c,
                       Index h, Index w, const std::vector<int>& labels,
                       const std::vector<float>& values) {
  if (n < 1 || t < 1 || c < 1 || h < 1 || w < 1)
    throw UsageError("save_event_frames: all dimensions must be >= 1");
  if (static_cast<Index>(labels.size()) != n)
    throw DimError("save_event_frames: label count does not match n");
  if (static_cast<Index>(values.size()) != n * t * c * h * w)
    throw DimError("save_event_frames: value count does not match dims");
  for (int label : labels)
    if (label < 0 || label > 0xFFFF)
      throw DataError("save_event_frames: label " + std::to_string(label) +
                      " does not fit in u16");

  std::vector<std::uint8_t> bytes;
  bytes.reserve(15 + labels.size() * 2 + values.size() * 4);
  bytes.insert(bytes.end(), kEvfMagic, kEvfMagic + 4);
  bytesio::put_u8(bytes, kEvfVersion);
  for (Index dim : {n, t, c, h, w})
    bytesio::put_u32(bytes, static_cast<std::uint32_t>(dim));
  for (int label : labels)
    bytesio::put_u16(bytes, static_cast<std::uint16_t>(label));
  for (float v : values) bytesio::put_f32(bytes, v);
  bytesio::write_file(path, bytes);
}

Dataset load_event_frames(const std::string& path) {
  const std::vector<std::uint8_t> bytes = bytesio::read_file(path);
  bytesio::Reader r(bytes.data(), bytes.size(), path);
  r.expect_magic(kEvfMagic, "event frame magic");
  const std::uint8_t version = r.u8("version");
  if (version != kEvfVersion)
    throw FormatError(path + ": unsupported version " +
                      std::to_string(version) + ", expected " +
                      std::to_string(kEvfVersion));
  const std::uint32_t n = r.u32("sample count");
  const std::uint32_t t = r.u32("timestep count");
  const std::uint32_t c = r.u32("channel count");
  const std::uint32_t h = r.u32("frame height");
  const std::uint32_t w = r.u32("frame width");
  if (n == 0 || t == 0 || c == 0 || h == 0 || w == 0)
    throw FormatError(path + ": zero-sized dimension in header (n=" +
                      std::to_string(n) + " t=" + std::to_string(t) + " c=" +
                      std::to_string(c) + " h=" + std::to_string(h) + " w=" +
                      std::to_string(w) + ")");

  Dataset ds;
  ds.n = static_cast<Index>(n);
  ds.t = static_cast<Index>(t);
  ds.d = static_cast<Index>(c) * h * w;
  ds.labels.resize(n);
  int max_label = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    ds.labels[i] = static_cast<int>(r.u16("label"));
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.num_classes = max_label + 1;

  const std::size_t count = static_cast<std::size_t>(ds.n * ds.t * ds.d);
  ds.values.resize(count);
  float max_value = 0.0f;
  for (std::size_t i = 0; i < count; ++i) {
    const float v = r.f32("frame value");
    ds.values[i] = static_cast<Real>(v);
    max_value = std::max(max_value, v);
  }
  r.expect_end("frame values");

  if (max_value > 0.0f)
    for (Real& v : ds.values) v /= static_cast<Real>(max_value);
  ds.lo = Real(0);
  ds.hi = Real(1);
  return ds;
}

Dataset load_table(const std::string& path, int timesteps) {
  if (timesteps < 1) throw ConfigError("load_table: timesteps must be >= 1");
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);

  std::vector<std::vector<Real>> rows;
  std::vector<int> labels;
  std::size_t expected_fields = 0;
  std::string line;
  long line_no = 0;
  int max_label = 0;
  Real lo = Real(0), hi = Real(0);
  bool have_bounds = false;

  while (std::getline(in, line)) {
    ++line_no;
    const std::string content = trim(line);
    if (content.empty()) continue;

    std::vector<std::string> fields = split(content, ',');
    for (std::string& f : fields) f = trim(f);

    if (expected_fields == 0) {
      if (fields.size() < 2)
        throw FormatError(path + " line " + std::to_string(line_no) +
                          ": need a label and at least one feature");
      expected_fields = fields.size();
    } else if (fields.size() != expected_fields) {
      throw FormatError(path + " line " + std::to_string(line_no) + ": " +
                        std::to_string(fields.size()) + " fields, expected " +
                        std::to_string(expected_fields));
    }

    long label = 0;
    if (!parse_long_strict(fields[0], label))
      throw FormatError(path + " line " + std::to_string(line_no) +
                        ": label '" + fields[0] + "' is not an integer");
    if (label < 0)
      throw DataError(path + " line " + std::to_string(line_no) + ": label " +
                      std::to_string(label) + " is negative");
    max_label = std::max(max_label, static_cast<int>(label));
    labels.push_back(static_cast<int>(label));

    std::vector<Real> feats(fields.size() - 1);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      double v = 0;
      if (!parse_double_strict(fields[i], v))
        throw FormatError(path + " line " + std::to_string(line_no) +
                          " column " + std::to_string(i + 1) + ": '" +
                          fields[i] + "' is not numeric");
      feats[i - 1] = static_cast<Real>(v);
      if (!have_bounds) {
        lo = hi = static_cast<Real>(v);
        have_bounds = true;
      } else {
        lo = std::min(lo, static_cast<Real>(v));
        hi = std::max(hi, static_cast<Real>(v));
      }
    }
    rows.push_back(std::move(feats));
  }
  if (rows.empty()) throw DataError(path + ": no data rows");

  Dataset ds;
  ds.n = static_cast<Index>(rows.size());
  ds.t = timesteps;
  ds.d = static_cast<Index>(expected_fields - 1);
  ds.labels = std::move(labels);
  ds.num_classes = max_label + 1;
  ds.lo = lo;
  ds.hi = hi;
  ds.values.resize(static_cast<std::size_t>(ds.n * ds.t * ds.d));
  std::size_t at = 0;
  for (Index s = 0; s < ds.n; ++s)
    for (Index t = 0; t < ds.t; ++t)
      for (Index d = 0; d < ds.d; ++d)
        ds.values[at++] = rows[static_cast<std::size_t>(s)]
                              [static_cast<std::size_t>(d)];
  return ds;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& data,
                                          Real train_fraction,
                                          std::uint64_t seed) {
  if (!(train_fraction > Real(0)) || !(train_fraction < Real(1)))
    throw ConfigError("split: train_fraction must be in (0,1)");
  const Index n_train =
      static_cast<Index>(std::floor(double(train_fraction) * double(data.n)));
  const Index n_test = data.n - n_train;
  if (n_train < 1 || n_test < 1)
    throw ConfigError("split: both sides must be non-empty (got " +
                      std::to_string(n_train) + " train, " +
                      std::to_string(n_test) + " test)");

  std::vector<Index> order(static_cast<std::size_t>(data.n));
  std::iota(order.begin(), order.end(), Index(0));
  Rng rng(mix_seed(seed, 0x73706C74ULL));
  rng.shuffle(order);

  const auto take = [&](Index from, Index count) {
    Dataset out;
    out.n = count;
    out.t = data.t;
    out.d = data.d;
    out.num_classes = data.num_classes;
    out.lo = data.lo;
    out.hi = data.hi;
    out.values.resize(static_cast<std::size_t>(count * data.t * data.d));
    out.labels.resize(static_cast<std::size_t>(count));
    const std::size_t row = static_cast<std::size_t>(data.t * data.d);
    for (Index i = 0; i < count; ++i) {
      const Index src = order[static_cast<std::size_t>(from + i)];
      std::copy_n(data.values.begin() + static_cast<std::size_t>(src) * row,
                  row, out.values.begin() + static_cast<std::size_t>(i) * row);
      out.labels[static_cast<std::size_t>(i)] =
          data.labels[static_cast<std::size_t>(src)];
    }
    return out;
  };
  return {take(0, n_train), take(n_train, n_test)};
}

Tensor batch_inputs(const Dataset& data, const std::vector<Index>& idx) {
  const Index batch = static_cast<Index>(idx.size());
  Tensor x = Tensor::zeros({data.t, batch, data.d});
  Real* xv = x.values().data();
  for (Index t = 0; t < data.t; ++t)
    for (Index b = 0; b < batch; ++b)
      for (Index d = 0; d < data.d; ++d)
        xv[(t * batch + b) * data.d + d] = data.at(idx[static_cast<std::size_t>(b)], t, d);
  return x;
}

std::vector<int> batch_labels(const Dataset& data,
                              const std::vector<Index>& idx) {
  std::vector<int> labels(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i)
    labels[i] = data.labels[static_cast<std::size_t>(idx[i])];
  return labels;
}

}  // namespace snnd
