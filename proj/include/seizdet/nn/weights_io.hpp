#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "seizdet/error.hpp"
#include "seizdet/nn/network.hpp"
#include "seizdet/text_io.hpp"

namespace seizdet::nn {

// Weights file (text):
//   arch input=<CxL> layers=<tok,tok,...> [key=value ...]
//   <param name> <shape> [nontrainable] v1 v2 ...
// Values use the shortest exact decimal form of the stored scalar.
struct WeightsMeta {
  std::map<std::string, std::string> entries;
};

inline std::string architecture_line(const Shape& input, const std::vector<LayerSpec>& specs, const WeightsMeta& meta = {}) {
  std::string layers;
  for (std::size_t i = 0; i < specs.size(); ++i) layers += (i ? "," : "") + specs[i].token();
  std::string line = "arch input=" + shape_string(input) + " layers=" + layers;
  for (const auto& [k, v] : meta.entries) line += " " + k + "=" + v;
  return line;
}

template <std::floating_point T>
void write_weights(const Network<T>& net, std::ostream& out, const WeightsMeta& meta = {}) {
  out << architecture_line(net.input_shape(), net.specs(), meta) << '\n';
  for (const auto* p : net.params()) {
    out << p->name << ' ' << shape_string(p->value.shape());
    if (!p->trainable) out << " nontrainable";
    for (T v : p->value.values()) out << ' ' << text::format_exact(v);
    out << '\n';
  }
}

template <std::floating_point T>
void save_weights(const Network<T>& net, const std::filesystem::path& path, const WeightsMeta& meta = {}) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  write_weights(net, out, meta);
  if (!out) throw Error("write failed: " + path.string());
}

namespace detail {

inline Shape parse_shape(std::string_view s, const std::string& source, std::size_t line) {
  Shape out;
  for (auto part : text::split(s, 'x')) {
    const auto v = text::parse_int(part);
    if (!v || *v < 1) throw IngestError(source, line, "bad shape '" + std::string(s) + "'");
    out.push_back(static_cast<std::size_t>(*v));
  }
  return out;
}

}  // namespace detail

template <std::floating_point T>
struct LoadedNetwork {
  Network<T> network;
  WeightsMeta meta;
};

template <std::floating_point T>
LoadedNetwork<T> read_weights(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw IngestError(source, 1, "empty weights file");
  std::istringstream head(line);
  std::string word;
  head >> word;
  if (word != "arch") throw IngestError(source, 1, "expected architecture line starting with 'arch'");
  Shape input;
  std::vector<LayerSpec> specs;
  WeightsMeta meta;
  bool have_input = false, have_layers = false;
  while (head >> word) {
    const auto eq = word.find('=');
    if (eq == std::string::npos) throw IngestError(source, 1, "malformed field '" + word + "'");
    const std::string key = word.substr(0, eq), value = word.substr(eq + 1);
    if (key == "input") {
      input = detail::parse_shape(value, source, 1);
      have_input = true;
    } else if (key == "layers") {
      try {
        for (auto tok : text::split(value, ',')) specs.push_back(LayerSpec::parse(tok));
      } catch (const ContractError& e) {
        throw IngestError(source, 1, e.what());
      }
      have_layers = true;
    } else {
      meta.entries[key] = value;
    }
  }
  if (!have_input || !have_layers) throw IngestError(source, 1, "architecture line needs input= and layers=");

  LoadedNetwork<T> loaded{Network<T>(input, specs, 0), std::move(meta)};
  std::map<std::string, Param<T>*> by_name;
  for (auto* p : loaded.network.params()) by_name[p->name] = p;
  std::size_t line_no = 1, filled = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    std::istringstream row(line);
    std::string name, shape_s;
    row >> name >> shape_s;
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw IngestError(source, line_no, "unknown parameter '" + name + "'");
    Param<T>& p = *it->second;
    if (detail::parse_shape(shape_s, source, line_no) != p.value.shape())
      throw IngestError(source, line_no, name + ": shape " + shape_s + " does not match architecture " + shape_string(p.value.shape()));
    std::size_t i = 0;
    bool first = true;
    while (row >> word) {
      if (first && word == "nontrainable") {
        first = false;
        continue;
      }
      first = false;
      const auto v = text::parse_double(word);
      if (!v) throw IngestError(source, line_no, name + ": non-numeric value '" + word + "'");
      if (i >= p.value.size()) throw IngestError(source, line_no, name + ": too many values");
      p.value[i++] = static_cast<T>(*v);
    }
    if (i != p.value.size()) throw IngestError(source, line_no, name + ": expected " + std::to_string(p.value.size()) + " values, got " + std::to_string(i));
    ++filled;
  }
  if (filled != by_name.size()) throw IngestError(source, line_no, "weights file is missing parameter tensors");
  return loaded;
}

template <std::floating_point T>
LoadedNetwork<T> load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return read_weights<T>(in, path.string());
}

}  // namespace seizdet::nn
