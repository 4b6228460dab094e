#pragma once

#include <bit>
#include <cstring>
#include <fstream>

#include "mmt/tensor.hpp"

namespace mmt {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format stores raw little-endian values");

// Versioned parameter file: per parameter a name/shape header line followed
// by raw little-endian values; an FNV-1a hash over all value bytes guards the
// payload.

namespace detail {
inline uint64_t fnv1a(uint64_t h, const void* data, size_t n) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}
}  // namespace detail

template <typename T>
void save_checkpoint(const std::string& path, const std::vector<Parameter<T>*>& params,
                     const std::map<std::string, std::string>& meta = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_io("cannot write checkpoint: ", path);
  out << "mmt-ckpt v1\n";
  out << "dtype " << (sizeof(T) == 4 ? "f32" : "f64") << "\n";
  out << "meta " << meta.size() << "\n";
  for (const auto& [k, v] : meta) out << k << " " << v << "\n";
  out << "params " << params.size() << "\n";
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto* p : params) {
    out << "param " << p->name << " " << p->value.ndim();
    for (auto d : p->value.shape) out << " " << d;
    out << "\n";
    out.write(reinterpret_cast<const char*>(p->value.data()),
              std::streamsize(sizeof(T) * size_t(p->value.size())));
    out << "\n";
    h = detail::fnv1a(h, p->value.data(), sizeof(T) * size_t(p->value.size()));
  }
  std::ostringstream hex;
  hex << std::hex << h;
  out << "hash " << hex.str() << "\n";
  if (!out) fail_io("checkpoint write failed: ", path);
}

// Loads values into the given parameters, matched by name; shapes must agree.
template <typename T>
std::map<std::string, std::string> load_checkpoint(const std::string& path,
                                                   const std::vector<Parameter<T>*>& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_io("cannot open checkpoint: ", path);
  std::string line;
  auto next_line = [&]() {
    if (!std::getline(in, line)) fail_data("truncated checkpoint: ", path);
    return line;
  };
  if (next_line() != "mmt-ckpt v1") fail_data("bad checkpoint header: ", path);
  {
    auto f = split_ws(next_line());
    if (f.size() != 2 || f[0] != "dtype") fail_data("bad dtype line in ", path);
    std::string expect = sizeof(T) == 4 ? "f32" : "f64";
    if (f[1] != expect)
      fail_data("checkpoint dtype ", f[1], " does not match requested ", expect);
  }
  std::map<std::string, std::string> meta;
  {
    auto f = split_ws(next_line());
    if (f.size() != 2 || f[0] != "meta") fail_data("bad meta line in ", path);
    size_t n = std::stoull(f[1]);
    for (size_t i = 0; i < n; ++i) {
      auto kv = split_ws(next_line());
      if (kv.empty()) fail_data("bad meta entry in ", path);
      std::string key = kv[0];
      kv.erase(kv.begin());
      meta[key] = join(kv, " ");
    }
  }
  std::map<std::string, Parameter<T>*> by_name;
  for (auto* p : params) by_name[p->name] = p;
  size_t count = 0;
  {
    auto f = split_ws(next_line());
    if (f.size() != 2 || f[0] != "params") fail_data("bad params line in ", path);
    count = std::stoull(f[1]);
  }
  if (count != by_name.size())
    fail_data("checkpoint has ", count, " parameters, model expects ", by_name.size());
  uint64_t h = 0xcbf29ce484222325ull;
  for (size_t i = 0; i < count; ++i) {
    auto f = split_ws(next_line());
    if (f.size() < 3 || f[0] != "param") fail_data("bad param header in ", path);
    const std::string& name = f[1];
    int nd = std::stoi(f[2]);
    if (int(f.size()) != 3 + nd) fail_data("bad param shape in ", path);
    std::vector<int64_t> shape;
    for (int k = 0; k < nd; ++k) shape.push_back(std::stoll(f[size_t(3 + k)]));
    auto it = by_name.find(name);
    if (it == by_name.end()) fail_data("checkpoint parameter not in model: ", name);
    Parameter<T>& p = *it->second;
    if (p.value.shape != shape)
      fail_data("shape mismatch for ", name, ": checkpoint ", shape_str(shape), ", model ",
                shape_str(p.value.shape));
    in.read(reinterpret_cast<char*>(p.value.data()),
            std::streamsize(sizeof(T) * size_t(p.value.size())));
    if (!in) fail_data("truncated checkpoint payload: ", path);
    h = detail::fnv1a(h, p.value.data(), sizeof(T) * size_t(p.value.size()));
    next_line();  // trailing newline after the raw block
  }
  {
    auto f = split_ws(next_line());
    if (f.size() != 2 || f[0] != "hash") fail_data("missing checkpoint hash: ", path);
    std::ostringstream hex;
    hex << std::hex << h;
    if (f[1] != hex.str()) fail_data("checkpoint hash mismatch: ", path);
  }
  return meta;
}

}  // namespace mmt
