#include "tokvc/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "tokvc/errors.hpp"

namespace tokvc {

namespace {

constexpr char kMagic[4] = {'T', 'V', 'C', 'K'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_str(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T get(std::istream& is, const std::string& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw FormatError(path + ": truncated checkpoint");
  return v;
}

std::string get_str(std::istream& is, const std::string& path, std::uint32_t limit = 1u << 26) {
  const auto n = get<std::uint32_t>(is, path);
  if (n > limit) throw FormatError(path + ": implausible string length");
  std::string s(n, '\0');
  if (!is.read(s.data(), n)) throw FormatError(path + ": truncated checkpoint");
  return s;
}

std::uint8_t dtype_code(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return 0;
    case torch::kFloat64: return 1;
    case torch::kInt64: return 2;
    case torch::kInt32: return 3;
    case torch::kBool: return 4;
    default: throw InvalidArgument("checkpoint: unsupported tensor dtype");
  }
}

torch::ScalarType dtype_from(std::uint8_t c, const std::string& path) {
  switch (c) {
    case 0: return torch::kFloat32;
    case 1: return torch::kFloat64;
    case 2: return torch::kInt64;
    case 3: return torch::kInt32;
    case 4: return torch::kBool;
    default: throw FormatError(path + ": unknown dtype code " + std::to_string(c));
  }
}

}  // namespace

const torch::Tensor& Checkpoint::get(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw FormatError("checkpoint has no tensor '" + name + "'");
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& e : tensors) {
    if (e.first == name) return true;
  }
  return false;
}

NamedTensors Checkpoint::with_prefix(const std::string& prefix) const {
  NamedTensors out;
  for (const auto& [n, t] : tensors) {
    if (n.rfind(prefix, 0) == 0) out.emplace_back(n.substr(prefix.size()), t);
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot write " + tmp.string());
    os.write(kMagic, 4);
    put_str(os, kCheckpointSchema);
    put<std::int64_t>(os, ckpt.step);
    put_str(os, ckpt.config_text);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, t_in] : ckpt.tensors) {
      const auto t = t_in.detach().cpu().contiguous();
      put_str(os, name);
      put<std::uint8_t>(os, dtype_code(t.scalar_type()));
      put<std::uint32_t>(os, static_cast<std::uint32_t>(t.dim()));
      for (auto d : t.sizes()) put<std::int64_t>(os, d);
      const std::uint64_t nbytes = t.numel() * t.element_size();
      put<std::uint64_t>(os, nbytes);
      os.write(static_cast<const char*>(t.data_ptr()), static_cast<std::streamsize>(nbytes));
    }
    if (!os) throw FormatError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path_in) {
  const std::string path = path_in.string();
  std::ifstream is(path_in, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw FormatError(path + ": not a checkpoint");
  const auto schema = get_str(is, path, 256);
  if (schema != kCheckpointSchema) throw FormatError(path + ": unsupported schema '" + schema + "'");
  Checkpoint ckpt;
  ckpt.step = get<std::int64_t>(is, path);
  ckpt.config_text = get_str(is, path);
  const auto count = get<std::uint32_t>(is, path);
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name = get_str(is, path, 4096);
    const auto dtype = dtype_from(get<std::uint8_t>(is, path), path);
    const auto ndim = get<std::uint32_t>(is, path);
    if (ndim > 8) throw FormatError(path + ": implausible tensor rank");
    std::vector<int64_t> dims(ndim);
    for (auto& d : dims) {
      d = get<std::int64_t>(is, path);
      if (d < 0) throw FormatError(path + ": negative dimension");
    }
    auto t = torch::empty(dims, dtype);
    const auto nbytes = get<std::uint64_t>(is, path);
    if (nbytes != static_cast<std::uint64_t>(t.numel() * t.element_size())) {
      throw FormatError(path + ": payload size mismatch for '" + name + "'");
    }
    if (!is.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(nbytes))) {
      throw FormatError(path + ": truncated payload for '" + name + "'");
    }
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ckpt;
}

NamedTensors module_state(const torch::nn::Module& m, const std::string& prefix) {
  NamedTensors out;
  for (const auto& p : m.named_parameters()) out.emplace_back(prefix + p.key(), p.value());
  for (const auto& b : m.named_buffers()) out.emplace_back(prefix + b.key(), b.value());
  return out;
}

void load_module_state(torch::nn::Module& m, const Checkpoint& ckpt, const std::string& prefix) {
  torch::NoGradGuard guard;
  auto assign = [&](const std::string& name, torch::Tensor& dst) {
    const auto& src = ckpt.get(prefix + name);
    if (src.sizes() != dst.sizes()) {
      throw FormatError("checkpoint tensor '" + prefix + name + "' has the wrong shape");
    }
    dst.copy_(src);
  };
  for (auto& p : m.named_parameters()) assign(p.key(), p.value());
  for (auto& b : m.named_buffers()) assign(b.key(), b.value());
}

NamedTensors optimizer_state(const torch::optim::AdamW& opt, const std::string& prefix) {
  NamedTensors out;
  long index = 0;
  for (const auto& group : opt.param_groups()) {
    for (const auto& p : group.params()) {
      const auto it = opt.state().find(p.unsafeGetTensorImpl());
      if (it != opt.state().end()) {
        const auto& s = static_cast<const torch::optim::AdamWParamState&>(*it->second);
        const auto base = prefix + std::to_string(index) + "/";
        out.emplace_back(base + "step", torch::tensor(static_cast<int64_t>(s.step())));
        out.emplace_back(base + "exp_avg", s.exp_avg());
        out.emplace_back(base + "exp_avg_sq", s.exp_avg_sq());
      }
      ++index;
    }
  }
  return out;
}

void load_optimizer_state(torch::optim::AdamW& opt, const Checkpoint& ckpt, const std::string& prefix) {
  opt.state().clear();
  long index = 0;
  for (auto& group : opt.param_groups()) {
    for (auto& p : group.params()) {
      const auto base = prefix + std::to_string(index) + "/";
      if (ckpt.has(base + "step")) {
        auto s = std::make_unique<torch::optim::AdamWParamState>();
        s->step(ckpt.get(base + "step").item<int64_t>());
        s->exp_avg(ckpt.get(base + "exp_avg").clone());
        s->exp_avg_sq(ckpt.get(base + "exp_avg_sq").clone());
        if (s->exp_avg().sizes() != p.sizes()) throw FormatError("optimizer state shape mismatch at " + base);
        opt.state()[p.unsafeGetTensorImpl()] = std::move(s);
      }
      ++index;
    }
  }
}

}  // namespace tokvc
