#include <limits>

#include "protox/binary_io.hpp"
#include "protox/trainer.hpp"

namespace protox {

namespace {

constexpr char kMagic[4] = {'P', 'F', 'C', 'K'};

void write_tensor(ByteWriter& w, const std::string& name, const Tensor<float>& t) {
  w.u16(static_cast<std::uint16_t>(name.size()));
  w.bytes(name);
  w.u8(static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
  for (float v : t.data()) w.f32(v);
}

struct NamedBlob {
  std::string name;
  Tensor<float> tensor;
};

NamedBlob read_tensor(ByteReader& r) {
  NamedBlob b;
  b.name = r.str(r.u16());
  const std::size_t rank = r.u8();
  if (rank == 0) throw FormatError("tensor '" + b.name + "' has rank 0");
  Shape shape(rank);
  std::size_t n = 1;
  for (auto& d : shape) {
    d = r.u32();
    if (d == 0) throw FormatError("tensor '" + b.name + "' has a zero dimension");
    n *= d;
  }
  if (n > r.remaining() / 4) {
    throw FormatError("truncated input at byte offset " + std::to_string(r.offset()) + ": tensor '" + b.name +
                      "' needs " + std::to_string(n * 4) + " bytes");
  }
  std::vector<float> data(n);
  r.read_f32s(data);
  b.tensor = Tensor<float>(std::move(shape), std::move(data));
  return b;
}

/// Copies `blobs[offset..]` into the skeleton's tensors, checking names and
/// shapes against `prefix` + the canonical parameter names.
void fill(ExtractorParams<float>& params, const std::vector<NamedBlob>& blobs, std::size_t offset,
          const std::string& prefix) {
  auto named = params.named();
  if (blobs.size() < offset + named.size()) throw FormatError("checkpoint is missing parameter tensors");
  for (std::size_t i = 0; i < named.size(); ++i) {
    const auto& b = blobs[offset + i];
    if (b.name != prefix + named[i].name) {
      throw FormatError("unexpected tensor '" + b.name + "', expected '" + prefix + named[i].name + "'");
    }
    if (b.tensor.shape() != named[i].tensor->shape()) {
      throw FormatError("tensor '" + b.name + "' has shape " + shape_string(b.tensor.shape()) + ", expected " +
                        shape_string(named[i].tensor->shape()));
    }
    *named[i].tensor = b.tensor;
  }
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const TrainState& state, const TrainConfig& config) {
  nlohmann::json history = nlohmann::json::array();
  for (const auto& r : state.history) history.push_back(to_json(r));
  nlohmann::json meta = {
      {"config", to_json(config)},
      {"model", {{"dim", state.params.dim}, {"heads", state.params.heads}, {"layers", state.params.layer_count()}}},
      {"adam",
       {{"step", state.adam.step},
        {"lr", state.adam.hyper.lr},
        {"beta1", state.adam.hyper.beta1},
        {"beta2", state.adam.hyper.beta2},
        {"eps", state.adam.hyper.eps}}},
      {"progress",
       {{"epochs_completed", state.epochs_completed},
        {"best_epoch", state.best_epoch},
        {"best_val_accuracy", state.best_val_accuracy ? nlohmann::json(*state.best_val_accuracy) : nlohmann::json()}}},
      {"history", history}};
  const std::string blob = meta.dump();

  ByteWriter w;
  w.bytes(std::string_view(kMagic, 4));
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(blob.size()));
  w.bytes(blob);

  const auto current = state.params.named();
  const auto best = state.best_params.named();
  w.u32(static_cast<std::uint32_t>(current.size() + best.size()));
  for (const auto& nt : current) write_tensor(w, nt.name, *nt.tensor);
  for (const auto& nt : best) write_tensor(w, "best." + nt.name, *nt.tensor);

  w.u32(static_cast<std::uint32_t>(state.adam.m.size() + state.adam.v.size()));
  for (std::size_t i = 0; i < state.adam.m.size(); ++i) write_tensor(w, "adam.m." + current[i].name, state.adam.m[i]);
  for (std::size_t i = 0; i < state.adam.v.size(); ++i) write_tensor(w, "adam.v." + current[i].name, state.adam.v[i]);
  w.seal();
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw FormatError("checkpoint too short");
  const auto stored = ByteReader(bytes.last(8)).u64();
  if (fnv1a64(bytes.first(bytes.size() - 8)) != stored) throw FormatError("checkpoint hash mismatch: file is corrupt");

  ByteReader r(bytes.first(bytes.size() - 8));
  if (r.str(4) != std::string_view(kMagic, 4)) throw FormatError("not a checkpoint: bad magic");
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(r.str(r.u32()));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }

  Checkpoint ck;
  try {
    ck.config = train_config_from_json(meta.at("config"));
    const auto& model = meta.at("model");
    const auto dim = model.at("dim").get<std::size_t>();
    const auto heads = model.at("heads").get<std::size_t>();
    const auto layers = model.at("layers").get<std::size_t>();
    // Skeletons with the right shapes; every value is overwritten below.
    ck.state.params = init_params(dim, layers, heads, 0);
    ck.state.best_params = ck.state.params;

    const auto& adam = meta.at("adam");
    ck.state.adam = make_adam_state(ck.state.params.named(),
                                    AdamHyper{adam.at("lr").get<double>(), adam.at("beta1").get<double>(),
                                              adam.at("beta2").get<double>(), adam.at("eps").get<double>()});
    ck.state.adam.step = adam.at("step").get<std::uint64_t>();

    const auto& progress = meta.at("progress");
    ck.state.epochs_completed = progress.at("epochs_completed").get<std::size_t>();
    ck.state.best_epoch = progress.at("best_epoch").get<std::size_t>();
    if (!progress.at("best_val_accuracy").is_null())
      ck.state.best_val_accuracy = progress.at("best_val_accuracy").get<double>();
    for (const auto& h : meta.at("history")) ck.state.history.push_back(epoch_record_from_json(h));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata is incomplete: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint metadata is inconsistent: ") + e.what());
  }

  std::vector<NamedBlob> tensors(r.u32());
  for (auto& t : tensors) t = read_tensor(r);
  const std::size_t n = ck.state.params.named().size();
  if (tensors.size() != 2 * n) throw FormatError("checkpoint holds " + std::to_string(tensors.size()) +
                                                 " parameter tensors, expected " + std::to_string(2 * n));
  fill(ck.state.params, tensors, 0, "");
  fill(ck.state.best_params, tensors, n, "best.");

  std::vector<NamedBlob> moments(r.u32());
  for (auto& t : moments) t = read_tensor(r);
  if (moments.size() != 2 * n) throw FormatError("checkpoint holds " + std::to_string(moments.size()) +
                                                 " optimizer tensors, expected " + std::to_string(2 * n));
  const auto names = ck.state.params.named();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& m = moments[i];
    const auto& v = moments[n + i];
    if (m.name != "adam.m." + names[i].name || v.name != "adam.v." + names[i].name ||
        m.tensor.shape() != names[i].tensor->shape() || v.tensor.shape() != names[i].tensor->shape()) {
      throw FormatError("optimizer tensors do not match parameter '" + names[i].name + "'");
    }
    ck.state.adam.m[i] = m.tensor;
    ck.state.adam.v[i] = v.tensor;
  }
  if (r.remaining() != 0) throw FormatError("unexpected bytes at offset " + std::to_string(r.offset()));
  return ck;
}

void save_checkpoint(const TrainState& state, const TrainConfig& config, const std::string& path) {
  write_file(path, encode_checkpoint(state, config));
}

Checkpoint load_checkpoint(const std::string& path) {
  const auto bytes = read_file(path);
  try {
    return decode_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

}  // namespace protox
