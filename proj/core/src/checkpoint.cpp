#include "avf/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "avf/io.hpp"

namespace avf {

namespace {

constexpr char kMagic[4] = {'A', 'V', 'C', 'K'};

void put_u32(std::string& out, std::uint32_t v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof v);
}
void put_u64(std::string& out, std::uint64_t v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof v);
}
void put_str(std::string& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;
  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw std::runtime_error("checkpoint: truncated archive");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, buf.data() + pos, 4);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v;
    std::memcpy(&v, buf.data() + pos, 8);
    pos += 8;
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(buf.data() + pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

void Checkpoint::put_params(const std::string& group, ParamMap& params) {
  for (auto& [name, t] : params.items) arrays[group + "/" + name] = t.value();
}

void Checkpoint::put_buffers(const std::string& group, BufMap& buffers) {
  for (auto& [name, v] : buffers.items) arrays[group + "/" + name] = *v;
}

void Checkpoint::get_params(const std::string& group, ParamMap& params) const {
  for (auto& [name, t] : params.items) {
    auto it = arrays.find(group + "/" + name);
    if (it == arrays.end())
      throw std::runtime_error("checkpoint: missing array '" + group + "/" + name + "'");
    if (it->second.size() != t.size())
      throw std::runtime_error("checkpoint: shape mismatch for '" + group + "/" + name + "'");
    t.value() = it->second;
  }
}

void Checkpoint::get_buffers(const std::string& group, BufMap& buffers) const {
  for (auto& [name, v] : buffers.items) {
    auto it = arrays.find(group + "/" + name);
    if (it == arrays.end())
      throw std::runtime_error("checkpoint: missing buffer '" + group + "/" + name + "'");
    if (it->second.size() != v->size())
      throw std::runtime_error("checkpoint: shape mismatch for '" + group + "/" + name + "'");
    *v = it->second;
  }
}

bool Checkpoint::has_group(const std::string& group) const {
  const std::string prefix = group + "/";
  auto it = arrays.lower_bound(prefix);
  return it != arrays.end() && it->first.compare(0, prefix.size(), prefix) == 0;
}

void Checkpoint::save(const std::string& path) const {
  std::string body;
  put_u32(body, kVersion);
  put_str(body, spec.to_json().dump());
  put_u64(body, rng_state);
  put_u32(body, static_cast<std::uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    put_str(body, k);
    put_str(body, v);
  }
  put_u32(body, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& [name, v] : arrays) {
    put_str(body, name);
    put_u64(body, static_cast<std::uint64_t>(v.size()));
    body.append(reinterpret_cast<const char*>(v.data()),
                static_cast<std::size_t>(v.size()) * sizeof(double));
  }
  const std::uint64_t h = fnv1a64(body.data(), body.size());

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
  f.write(kMagic, 4);
  f.write(body.data(), static_cast<std::streamsize>(body.size()));
  f.write(reinterpret_cast<const char*>(&h), sizeof h);
  if (!f) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string all = ss.str();
  if (all.size() < 4 + 8 || std::memcmp(all.data(), kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
  const std::string body = all.substr(4, all.size() - 4 - 8);
  std::uint64_t stored;
  std::memcpy(&stored, all.data() + all.size() - 8, 8);
  if (fnv1a64(body.data(), body.size()) != stored)
    throw std::runtime_error("checkpoint: content hash mismatch in '" + path + "'");

  Reader r{body};
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.spec = NetworkSpec::from_json(nlohmann::ordered_json::parse(r.str()));
  ckpt.rng_state = r.u64();
  const std::uint32_t n_meta = r.u32();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.str();
    ckpt.meta[k] = r.str();
  }
  const std::uint32_t n_arr = r.u32();
  for (std::uint32_t i = 0; i < n_arr; ++i) {
    std::string name = r.str();
    const std::uint64_t count = r.u64();
    r.need(count * sizeof(double));
    Vec v(static_cast<Eigen::Index>(count));
    std::memcpy(v.data(), body.data() + r.pos, count * sizeof(double));
    r.pos += count * sizeof(double);
    ckpt.arrays[name] = std::move(v);
  }
  return ckpt;
}

std::uint64_t group_hash(const Checkpoint& ckpt, const std::string& group) {
  const std::string prefix = group + "/";
  std::uint64_t h = 0xcbf29ce484222325ULL;
  bool any = false;
  for (const auto& [name, v] : ckpt.arrays) {
    if (name.compare(0, prefix.size(), prefix) != 0) continue;
    any = true;
    h = fnv1a64(name.data(), name.size(), h);
    h = fnv1a64(v.data(), static_cast<std::size_t>(v.size()) * sizeof(double), h);
  }
  if (!any) throw std::runtime_error("group_hash: no arrays under '" + group + "'");
  return h;
}

}  // namespace avf
