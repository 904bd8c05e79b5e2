#include "snnd/network.hpp"

#include <cmath>
#include <cstring>

#include "snnd/bytesio.hpp"
#include "snnd/error.hpp"
#include "snnd/ops.hpp"
#include "snnd/rng.hpp"

namespace snnd {

void validate(const SnnConfig& cfg) {
  if (cfg.layer_sizes.size() < 2)
    throw ConfigError("SnnConfig: need at least input and output sizes");
  for (Index s : cfg.layer_sizes)
    if (s < 1) throw ConfigError("SnnConfig: layer sizes must be >= 1");
  if (cfg.timesteps < 2)
    throw ConfigError(
        "SnnConfig: timesteps must be >= 2, there is nothing to rank with " +
        std::to_string(cfg.timesteps) + " submodel(s)");
  validate(cfg.lif);
}

Tensor mean_logits(const TimestepOutputs& out) {
  if (out.logits.empty())
    throw DimError("mean_logits: no timestep outputs");
  return average(out.logits);
}

Network Network::build(const SnnConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  Network net;
  net.cfg_ = cfg;
  Rng rng(mix_seed(seed, 0x736E6E64u));  // dedicated init stream
  const std::size_t n_layers = cfg.layer_sizes.size() - 1;
  net.layers_.reserve(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    const Index fan_in = cfg.layer_sizes[l];
    const Index fan_out = cfg.layer_sizes[l + 1];
    const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    Layer layer;
    layer.weight = Tensor::zeros({fan_in, fan_out});
    Real* w = layer.weight.values().data();
    for (Index i = 0; i < fan_in * fan_out; ++i)
      w[i] = static_cast<Real>(rng.uniform(-bound, bound));
    layer.bias = Tensor::zeros({fan_out});
    layer.weight.set_requires_grad(true);
    layer.bias.set_requires_grad(true);
    net.layers_.push_back(std::move(layer));
  }
  net.states_.resize(n_layers > 0 ? n_layers - 1 : 0);
  return net;
}

std::vector<Tensor*> Network::parameters() {
  std::vector<Tensor*> out;
  out.reserve(layers_.size() * 2);
  for (Layer& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

Index Network::parameter_count() const {
  Index n = 0;
  for (const Layer& l : layers_) n += l.weight.numel() + l.bias.numel();
  return n;
}

void Network::zero_grad() {
  for (Layer& l : layers_) {
    l.weight.zero_grad();
    l.bias.zero_grad();
  }
}

TimestepOutputs Network::forward(const Tensor& input) {
  return truncated_forward(input, cfg_.timesteps);
}

TimestepOutputs Network::truncated_forward(const Tensor& input, int t_max) {
  if (input.ndim() != 3)
    throw DimError("forward: input must be [timesteps, batch, features]");
  if (input.dim(0) != cfg_.timesteps)
    throw DimError("forward: input has " + std::to_string(input.dim(0)) +
                   " timesteps, network expects " +
                   std::to_string(cfg_.timesteps));
  if (input.dim(2) != input_dim())
    throw DimError("forward: input feature size " +
                   std::to_string(input.dim(2)) + " does not match " +
                   std::to_string(input_dim()));
  if (t_max < 1 || t_max > cfg_.timesteps)
    throw UsageError("forward: t_max " + std::to_string(t_max) +
                     " outside [1," + std::to_string(cfg_.timesteps) + "]");

  const Index batch = input.dim(1);
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l)
    states_[l].reset(batch, cfg_.layer_sizes[l + 1]);

  TimestepOutputs out;
  out.logits.reserve(static_cast<std::size_t>(t_max));
  for (int t = 0; t < t_max; ++t) {
    Tensor x = slice_time(input, t);
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
      Tensor current = dense(x, layers_[l].weight, layers_[l].bias);
      x = lif_step(states_[l], current, cfg_.lif, mode_);
    }
    out.logits.push_back(dense(x, layers_.back().weight, layers_.back().bias));
  }
  return out;
}

std::vector<FlatArray<Real>> Network::snapshot() const {
  std::vector<FlatArray<Real>> snap;
  snap.reserve(layers_.size() * 2);
  for (const Layer& l : layers_) {
    snap.push_back(l.weight.values());
    snap.push_back(l.bias.values());
  }
  return snap;
}

void Network::restore(const std::vector<FlatArray<Real>>& params) {
  if (params.size() != layers_.size() * 2)
    throw DimError("restore: parameter list does not match architecture");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (params[2 * l].size() != layers_[l].weight.numel() ||
        params[2 * l + 1].size() != layers_[l].bias.numel())
      throw DimError("restore: parameter sizes do not match architecture");
    layers_[l].weight.values() = params[2 * l];
    layers_[l].bias.values() = params[2 * l + 1];
  }
}

namespace {
constexpr char kMagic[] = "SNNM";
constexpr std::uint8_t kVersion = 1;
constexpr std::uint8_t kReadoutMembrane = 0;
}  // namespace

std::vector<std::uint8_t> Network::serialize() const {
  std::vector<std::uint8_t> bytes;
  bytes.insert(bytes.end(), kMagic, kMagic + 4);
  bytesio::put_u8(bytes, kVersion);
  bytesio::put_u32(bytes, static_cast<std::uint32_t>(cfg_.layer_sizes.size()));
  for (Index s : cfg_.layer_sizes)
    bytesio::put_u32(bytes, static_cast<std::uint32_t>(s));
  bytesio::put_u32(bytes, static_cast<std::uint32_t>(cfg_.timesteps));
  bytesio::put_f64(bytes, double(cfg_.lif.tau));
  bytesio::put_f64(bytes, double(cfg_.lif.threshold));
  bytesio::put_f64(bytes, double(cfg_.lif.surrogate_width));
  bytesio::put_u8(bytes, kReadoutMembrane);
  for (const Layer& l : layers_) {
    const Real* w = l.weight.values().data();
    for (Index i = 0; i < l.weight.numel(); ++i)
      bytesio::put_f64(bytes, double(w[i]));
    const Real* b = l.bias.values().data();
    for (Index i = 0; i < l.bias.numel(); ++i)
      bytesio::put_f64(bytes, double(b[i]));
  }
  return bytes;
}

Network Network::deserialize(const std::vector<std::uint8_t>& bytes,
                             const std::string& source) {
  bytesio::Reader r(bytes.data(), bytes.size(), source);
  r.expect_magic(kMagic, "checkpoint magic");
  const std::uint8_t version = r.u8("checkpoint version");
  if (version != kVersion)
    throw FormatError(source + ": unsupported checkpoint version " +
                      std::to_string(version));
  SnnConfig cfg;
  const std::uint32_t n_sizes = r.u32("layer count");
  if (n_sizes < 2 || n_sizes > 64)
    throw FormatError(source + ": implausible layer count " +
                      std::to_string(n_sizes));
  cfg.layer_sizes.resize(n_sizes);
  for (std::uint32_t i = 0; i < n_sizes; ++i)
    cfg.layer_sizes[i] = static_cast<Index>(r.u32("layer size"));
  cfg.timesteps = static_cast<int>(r.u32("timesteps"));
  cfg.lif.tau = static_cast<Real>(r.f64("tau"));
  cfg.lif.threshold = static_cast<Real>(r.f64("threshold"));
  cfg.lif.surrogate_width = static_cast<Real>(r.f64("surrogate width"));
  const std::uint8_t readout = r.u8("readout kind");
  if (readout != kReadoutMembrane)
    throw FormatError(source + ": unknown readout kind " +
                      std::to_string(readout));
  validate(cfg);

  Network net = Network::build(cfg, /*seed=*/0);
  for (Layer& l : net.layers_) {
    Real* w = l.weight.values().data();
    for (Index i = 0; i < l.weight.numel(); ++i)
      w[i] = static_cast<Real>(r.f64("weight value"));
    Real* b = l.bias.values().data();
    for (Index i = 0; i < l.bias.numel(); ++i)
      b[i] = static_cast<Real>(r.f64("bias value"));
  }
  r.expect_end("parameter data");
  return net;
}

void Network::save(const std::string& path) const {
  bytesio::write_file(path, serialize());
}

Network Network::load(const std::string& path) {
  return deserialize(bytesio::read_file(path), path);
}

}  // namespace snnd
