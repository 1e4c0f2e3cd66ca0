#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "oilca/num/mlp.hpp"
#include "oilca/num/tensor.hpp"

namespace oilca::num {

// On-disk parameter file: a line-oriented manifest (kind, seed, step count,
// free-form meta such as layer dims / activation kinds, tensor declarations)
// followed by `blob:` and raw little-endian 64-bit floats in declared order.
struct Checkpoint {
  std::string kind;
  std::uint64_t seed = 0;
  std::uint64_t steps = 0;
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::pair<std::string, Tensor2>> tensors;

  void set_meta(const std::string& key, const std::string& value) {
    for (auto& kv : meta)
      if (kv.first == key) {
        kv.second = value;
        return;
      }
    meta.emplace_back(key, value);
  }

  const std::string& meta_at(const std::string& key) const {
    for (const auto& kv : meta)
      if (kv.first == key) return kv.second;
    throw FormatError("checkpoint: missing meta key '" + key + "'");
  }

  bool has_meta(const std::string& key) const {
    for (const auto& kv : meta)
      if (kv.first == key) return true;
    return false;
  }

  void add_tensor(const std::string& name, Tensor2 t) {
    for (const auto& nt : tensors)
      if (nt.first == name)
        throw ContractError("checkpoint: duplicate tensor '" + name + "'");
    tensors.emplace_back(name, std::move(t));
  }

  const Tensor2& tensor(const std::string& name) const {
    for (const auto& nt : tensors)
      if (nt.first == name) return nt.second;
    throw FormatError("checkpoint: missing tensor '" + name + "'");
  }

  void save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw PrerequisiteError("cannot write checkpoint: " + path);
    os << "oilca-checkpoint v1\n";
    os << "kind = " << kind << "\n";
    os << "seed = " << seed << "\n";
    os << "steps = " << steps << "\n";
    for (const auto& kv : meta) os << kv.first << " = " << kv.second << "\n";
    for (const auto& nt : tensors)
      os << "tensor " << nt.first << " " << nt.second.rows() << " "
         << nt.second.cols() << "\n";
    os << "blob:\n";
    for (const auto& nt : tensors)
      for (double v : nt.second.data()) write_f64_le(os, v);
    if (!os) throw PrerequisiteError("short write on checkpoint: " + path);
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw PrerequisiteError("checkpoint not found: " + path);
    std::string line;
    if (!std::getline(is, line) || line != "oilca-checkpoint v1")
      throw FormatError("bad checkpoint magic in " + path);
    Checkpoint ck;
    struct Decl {
      std::string name;
      int rows;
      int cols;
    };
    std::vector<Decl> decls;
    bool saw_blob = false;
    while (std::getline(is, line)) {
      if (line == "blob:") {
        saw_blob = true;
        break;
      }
      if (line.rfind("tensor ", 0) == 0) {
        std::istringstream ls(line.substr(7));
        Decl d;
        if (!(ls >> d.name >> d.rows >> d.cols) || d.rows <= 0 || d.cols <= 0)
          throw FormatError("bad tensor declaration: " + line);
        decls.push_back(d);
        continue;
      }
      const auto eq = line.find(" = ");
      if (eq == std::string::npos)
        throw FormatError("bad manifest line: " + line);
      const std::string key = line.substr(0, eq);
      const std::string value = line.substr(eq + 3);
      if (key == "kind")
        ck.kind = value;
      else if (key == "seed")
        ck.seed = std::stoull(value);
      else if (key == "steps")
        ck.steps = std::stoull(value);
      else
        ck.meta.emplace_back(key, value);
    }
    if (!saw_blob) throw FormatError("checkpoint has no blob section: " + path);
    for (const Decl& d : decls) {
      std::vector<double> data(static_cast<std::size_t>(d.rows) * d.cols);
      for (double& v : data) {
        if (!read_f64_le(is, v))
          throw FormatError("checkpoint blob truncated: " + path);
      }
      ck.tensors.emplace_back(d.name,
                              Tensor2::from_data(d.rows, d.cols, std::move(data)));
    }
    char extra;
    if (is.read(&extra, 1))
      throw FormatError("trailing bytes after checkpoint blob: " + path);
    return ck;
  }

 private:
  static void write_f64_le(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i)
      b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xffu);
    os.write(reinterpret_cast<const char*>(b), 8);
  }

  static bool read_f64_le(std::istream& is, double& v) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) return false;
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
      bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    std::memcpy(&v, &bits, sizeof v);
    return true;
  }
};

// Stores an MLP under `<prefix>.dims` / `<prefix>.acts` meta plus tensors
// `<prefix>.w<i>` / `<prefix>.b<i>` in layer order.
inline void put_mlp(Checkpoint& ck, const std::string& prefix, const Mlp& net) {
  std::string dims;
  for (int d : net.dims()) {
    if (!dims.empty()) dims += ",";
    dims += std::to_string(d);
  }
  std::string acts;
  for (Activation a : net.activations()) {
    if (!acts.empty()) acts += ",";
    acts += activation_name(a);
  }
  ck.set_meta(prefix + ".dims", dims);
  ck.set_meta(prefix + ".acts", acts);
  const auto& layers = net.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    ck.add_tensor(prefix + ".w" + std::to_string(i), layers[i].w);
    ck.add_tensor(prefix + ".b" + std::to_string(i), layers[i].b);
  }
}

inline std::vector<std::string> split_csv_field(const std::string& s) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(cur);
  return parts;
}

inline Mlp get_mlp(const Checkpoint& ck, const std::string& prefix) {
  const auto dim_parts = split_csv_field(ck.meta_at(prefix + ".dims"));
  const auto act_parts = split_csv_field(ck.meta_at(prefix + ".acts"));
  if (dim_parts.size() != act_parts.size() + 1)
    throw FormatError("checkpoint MLP '" + prefix + "': dims/acts disagree");
  std::vector<Layer> layers;
  for (std::size_t i = 0; i < act_parts.size(); ++i) {
    const int in = std::stoi(dim_parts[i]);
    const int out = std::stoi(dim_parts[i + 1]);
    Layer l;
    l.w = ck.tensor(prefix + ".w" + std::to_string(i));
    l.b = ck.tensor(prefix + ".b" + std::to_string(i));
    l.act = activation_from_name(act_parts[i]);
    if (l.w.rows() != in || l.w.cols() != out || l.b.rows() != 1 ||
        l.b.cols() != out)
      throw FormatError("checkpoint MLP '" + prefix +
                        "': tensor dims do not match manifest");
    layers.push_back(std::move(l));
  }
  return Mlp::from_layers(std::move(layers));
}

}  // namespace oilca::num
