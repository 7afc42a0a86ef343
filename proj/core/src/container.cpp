// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "rscope/container.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>

#include "rscope/errors.hpp"

namespace rscope {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kHeaderBytes = 16;

void put_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64_le(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void put_f32_le(std::vector<std::uint8_t>& out, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

float get_f32_le(const std::uint8_t* p) {
  std::uint32_t bits = 0;
  for (int i = 3; i >= 0; --i) bits = (bits << 8) | p[i];
  return std::bit_cast<float>(bits);
}

// Accumulates tensors in the order they are added and records the index.
class BlobWriter {
 public:
  void add(const std::string& name, std::vector<std::uint64_t> shape, const std::vector<float>& data) {
    json entry;
    entry["name"] = name;
    entry["dtype"] = "F32";
    entry["shape"] = shape;
    entry["offset"] = blob_.size();
    entry["nbytes"] = data.size() * 4;
    for (float f : data) put_f32_le(blob_, f);
    index_.push_back(std::move(entry));
  }

  json index() const { return index_; }
  const std::vector<std::uint8_t>& blob() const { return blob_; }

 private:
  json index_ = json::array();
  std::vector<std::uint8_t> blob_;
};

std::vector<std::uint8_t> frame(const json& manifest, const std::vector<std::uint8_t>& blob) {
  const std::string text = manifest.dump();
  std::vector<std::uint8_t> out(std::begin(kContainerMagic), std::end(kContainerMagic));
  out.reserve(kHeaderBytes + text.size() + blob.size());
  put_u64_le(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), blob.begin(), blob.end());
  return out;
}

struct Framed {
  json manifest;
  const std::uint8_t* blob = nullptr;
  std::size_t blob_size = 0;
};

Framed unframe(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kHeaderBytes) throw FormatError("container: truncated header");
  if (std::memcmp(bytes.data(), kContainerMagic, 8) != 0) {
    throw FormatError("container: bad magic (expected RSCOPE01)");
  }
  const std::uint64_t m = get_u64_le(bytes.data() + 8);
  if (m > bytes.size() - kHeaderBytes) throw FormatError("container: manifest length exceeds file size");
  Framed f;
  try {
    f.manifest = json::parse(bytes.begin() + kHeaderBytes, bytes.begin() + kHeaderBytes + static_cast<std::ptrdiff_t>(m));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("manifest: invalid JSON: ") + e.what());
  }
  if (!f.manifest.is_object()) throw FormatError("manifest: top level is not an object");
  f.blob = bytes.data() + kHeaderBytes + m;
  f.blob_size = bytes.size() - kHeaderBytes - m;
  return f;
}

const json& field(const json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) throw FormatError("manifest: missing field '" + where + key + "'");
  return *it;
}

template <typename T>
T get_as(const json& j, const char* key, const std::string& where) {
  const json& v = field(j, key, where);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw FormatError("manifest: field '" + where + key + "' has the wrong type");
  }
}

// Tensor lookup by name with bounds and shape checks.
class BlobReader {
 public:
  BlobReader(const json& index, const std::uint8_t* blob, std::size_t size) : blob_(blob), size_(size) {
    if (!index.is_array()) throw FormatError("manifest: 'tensors' is not an array");
    for (const auto& entry : index) {
      if (!entry.is_object()) throw FormatError("manifest: tensor entry is not an object");
      Entry e;
      e.name = get_as<std::string>(entry, "name", "tensors[].");
      const auto dtype = get_as<std::string>(entry, "dtype", "tensors[].");
      if (dtype != "F32") throw FormatError("manifest: tensor '" + e.name + "' has unsupported dtype " + dtype);
      e.shape = get_as<std::vector<std::uint64_t>>(entry, "shape", "tensors[].");
      e.offset = get_as<std::uint64_t>(entry, "offset", "tensors[].");
      e.nbytes = get_as<std::uint64_t>(entry, "nbytes", "tensors[].");
      std::uint64_t count = 1;
      for (auto s : e.shape) count *= s;
      if (e.nbytes != count * 4) throw FormatError("manifest: tensor '" + e.name + "' nbytes disagrees with shape");
      if (e.offset > size_ || e.nbytes > size_ - e.offset) {
        throw FormatError("manifest: tensor '" + e.name + "' lies outside the blob");
      }
      if (!entries_.emplace(e.name, e).second) throw FormatError("manifest: duplicate tensor '" + e.name + "'");
    }
  }

  bool has(const std::string& name) const { return entries_.count(name) != 0; }

  std::vector<float> read(const std::string& name, const std::vector<std::uint64_t>& expected_shape,
                          const std::string& field_name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw FormatError("manifest: missing tensor '" + name + "'");
    const Entry& e = it->second;
    if (e.shape != expected_shape) {
      throw ValidationError(field_name, "tensor '" + name + "' shape disagrees with model metadata");
    }
    std::vector<float> out(e.nbytes / 4);
    const std::uint8_t* p = blob_ + e.offset;
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = get_f32_le(p + 4 * i);
      if (!std::isfinite(out[i])) throw DataError(field_name + ": non-finite value in tensor '" + name + "'");
    }
    return out;
  }

 private:
  struct Entry {
    std::string name;
    std::vector<std::uint64_t> shape;
    std::uint64_t offset = 0;
    std::uint64_t nbytes = 0;
  };
  std::map<std::string, Entry> entries_;
  const std::uint8_t* blob_;
  std::size_t size_;
};

std::string layer_name(int layer, const char* what) {
  return "layer." + std::to_string(layer) + "." + what;
}

json meta_to_json(const ModelMeta& m) {
  return json{{"model_id", m.model_id},     {"n_layers", m.n_layers},
              {"d_model", m.d_model},       {"n_heads", m.n_heads},
              {"vocab_size", m.vocab_size}, {"norm_kind", std::string(to_string(m.norm_kind))},
              {"norm_eps", m.norm_eps}};
}

ModelMeta meta_from_json(const json& j) {
  if (!j.is_object()) throw FormatError("manifest: 'meta' is not an object");
  ModelMeta m;
  m.model_id = get_as<std::string>(j, "model_id", "meta.");
  m.n_layers = get_as<int>(j, "n_layers", "meta.");
  m.d_model = get_as<int>(j, "d_model", "meta.");
  m.n_heads = get_as<int>(j, "n_heads", "meta.");
  m.vocab_size = get_as<int>(j, "vocab_size", "meta.");
  m.norm_kind = norm_kind_from_string(get_as<std::string>(j, "norm_kind", "meta."));
  m.norm_eps = get_as<double>(j, "norm_eps", "meta.");
  if (m.n_layers < 1 || m.d_model < 1 || m.n_heads < 1 || m.vocab_size < 1) {
    throw ValidationError("meta", "dimensions must be positive");
  }
  return m;
}

json tokens_to_json(const TokenRecord& t) {
  json j;
  j["token_ids"] = t.token_ids;
  j["token_texts"] = t.token_texts;
  j["bos_index"] = t.bos_index ? json(*t.bos_index) : json(nullptr);
  j["list_span"] = json::array({t.list_span.start, t.list_span.end});
  j["intruder_positions"] = t.intruder_positions;
  return j;
}

TokenRecord tokens_from_json(const json& j) {
  if (!j.is_object()) throw FormatError("manifest: 'tokens' is not an object");
  TokenRecord t;
  t.token_ids = get_as<std::vector<std::int64_t>>(j, "token_ids", "tokens.");
  t.token_texts = get_as<std::vector<std::string>>(j, "token_texts", "tokens.");
  const json& bos = field(j, "bos_index", "tokens.");
  if (!bos.is_null()) t.bos_index = get_as<int>(j, "bos_index", "tokens.");
  const auto span = get_as<std::vector<int>>(j, "list_span", "tokens.");
  if (span.size() != 2) throw FormatError("manifest: 'tokens.list_span' must have two entries");
  t.list_span = {span[0], span[1]};
  t.intruder_positions = get_as<std::vector<int>>(j, "intruder_positions", "tokens.");
  return t;
}

json digits_to_json(const DigitVocab& d) {
  json arr = json::array();
  for (const auto& [value, entry] : d.entries) {
    arr.push_back(json{{"value", value}, {"token_ids", entry.token_ids}, {"single_token_only", entry.single_token_only}});
  }
  return arr;
}

DigitVocab digits_from_json(const json& j) {
  if (!j.is_array()) throw FormatError("manifest: 'digits' is not an array");
  DigitVocab d;
  for (const auto& e : j) {
    const int value = get_as<int>(e, "value", "digits[].");
    DigitEntry entry;
    entry.token_ids = get_as<std::vector<std::int64_t>>(e, "token_ids", "digits[].");
    entry.single_token_only = get_as<bool>(e, "single_token_only", "digits[].");
    if (!d.entries.emplace(value, std::move(entry)).second) {
      throw FormatError("manifest: duplicate digit value " + std::to_string(value));
    }
  }
  return d;
}

json behavior_to_json(const std::optional<BehavioralRecord>& b) {
  if (!b) return nullptr;
  return json{{"final_output_text", b->final_output_text},
              {"parsed_integer", b->parsed_integer ? json(*b->parsed_integer) : json(nullptr)},
              {"decoding", b->decoding}};
}

std::optional<BehavioralRecord> behavior_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  BehavioralRecord b;
  b.final_output_text = get_as<std::string>(j, "final_output_text", "behavior.");
  const json& p = field(j, "parsed_integer", "behavior.");
  if (!p.is_null()) b.parsed_integer = get_as<int>(j, "parsed_integer", "behavior.");
  b.decoding = get_as<std::string>(j, "decoding", "behavior.");
  return b;
}

void add_unembed_tensors(BlobWriter& w, const UnembedBlock& u, int vocab_size, int d_model) {
  const auto d = static_cast<std::uint64_t>(d_model);
  w.add("unembed", {static_cast<std::uint64_t>(vocab_size), d}, u.unembed);
  w.add("final_norm_weight", {d}, u.final_norm_weight);
  if (u.final_norm_bias) w.add("final_norm_bias", {d}, *u.final_norm_bias);
}

UnembedBlock read_unembed_tensors(const BlobReader& r, int vocab_size, int d_model) {
  const auto d = static_cast<std::uint64_t>(d_model);
  UnembedBlock u;
  u.unembed = r.read("unembed", {static_cast<std::uint64_t>(vocab_size), d}, "unembed.unembed");
  u.final_norm_weight = r.read("final_norm_weight", {d}, "unembed.final_norm_weight");
  if (r.has("final_norm_bias")) u.final_norm_bias = r.read("final_norm_bias", {d}, "unembed.final_norm_bias");
  return u;
}

std::vector<std::uint8_t> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError(path.string(), "read failed");
  return bytes;
}

void spit(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(path.string(), "write failed");
}

// True when the file parses as a shared-weights container. Anything else,
// including corrupt files, is left for the trace reader to reject.
bool is_weights_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::uint8_t header[kHeaderBytes];
  if (!in.read(reinterpret_cast<char*>(header), kHeaderBytes)) return false;
  if (std::memcmp(header, kContainerMagic, 8) != 0) return false;
  const std::uint64_t m = get_u64_le(header + 8);
  std::error_code ec;
  const auto size = fs::file_size(path, ec);
  if (ec || m > size - kHeaderBytes) return false;
  std::string text(static_cast<std::size_t>(m), '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(m))) return false;
  const json j = json::parse(text, nullptr, false);
  return j.is_object() && j.value("format", "") == "rscope-weights";
}

}  // namespace

std::vector<std::uint8_t> encode_trace(const ActivationTrace& trace, const WriteOptions& options,
                                       const fs::path& trace_dir) {
  validate(trace);
  const auto& m = trace.meta;
  const auto d = static_cast<std::uint64_t>(m.d_model);

  BlobWriter w;
  w.add("embedding_out", {d}, trace.states.embedding_out);
  for (int i = 1; i <= m.n_layers; ++i) {
    const auto& ls = trace.states.layer(i);
    w.add(layer_name(i, "h_before"), {d}, ls.before);
    w.add(layer_name(i, "h_post_attn"), {d}, ls.post_attn);
    w.add(layer_name(i, "h_post_layer"), {d}, ls.post_layer);
  }
  for (int i = 1; i <= m.n_layers; ++i) {
    const auto& al = trace.attn.layer(i);
    w.add(layer_name(i, "attn"), {static_cast<std::uint64_t>(al.n_heads), static_cast<std::uint64_t>(al.seq_len)},
          al.weights);
  }

  json manifest;
  if (options.shared_weights) {
    fs::path ref = *options.shared_weights;
    if (!trace_dir.empty()) {
      std::error_code ec;
      auto rel = fs::relative(fs::absolute(ref), fs::absolute(trace_dir), ec);
      if (!ec && !rel.empty()) ref = rel;
    }
    manifest["unembed_ref"] = ref.generic_string();
  } else {
    add_unembed_tensors(w, trace.unembed, m.vocab_size, m.d_model);
  }

  manifest["format"] = "rscope-trace";
  manifest["format_version"] = kContainerFormatVersion;
  manifest["meta"] = meta_to_json(m);
  manifest["tokens"] = tokens_to_json(trace.tokens);
  manifest["digits"] = digits_to_json(trace.digits);
  manifest["behavior"] = behavior_to_json(trace.behavior);
  manifest["prompt_label"] = trace.prompt_label;
  manifest["continuity_tolerance"] = trace.continuity_tolerance;
  manifest["tensors"] = w.index();
  return frame(manifest, w.blob());
}

ActivationTrace decode_trace(const std::vector<std::uint8_t>& bytes, const fs::path& base_dir) {
  Framed f = unframe(bytes);
  const json& j = f.manifest;
  if (get_as<std::string>(j, "format", "") != "rscope-trace") throw FormatError("manifest: not a trace container");
  if (get_as<int>(j, "format_version", "") != kContainerFormatVersion) {
    throw FormatError("manifest: unsupported format_version");
  }

  ActivationTrace t;
  t.meta = meta_from_json(field(j, "meta", ""));
  t.tokens = tokens_from_json(field(j, "tokens", ""));
  t.digits = digits_from_json(field(j, "digits", ""));
  t.behavior = behavior_from_json(field(j, "behavior", ""));
  t.prompt_label = get_as<std::string>(j, "prompt_label", "");
  t.continuity_tolerance = get_as<double>(j, "continuity_tolerance", "");

  BlobReader r(field(j, "tensors", ""), f.blob, f.blob_size);
  const auto& m = t.meta;
  const auto d = static_cast<std::uint64_t>(m.d_model);
  t.states.embedding_out = r.read("embedding_out", {d}, "states.embedding_out");
  t.states.layers.resize(static_cast<std::size_t>(m.n_layers));
  t.attn.layers.resize(static_cast<std::size_t>(m.n_layers));
  const auto seq_len = static_cast<std::uint64_t>(t.tokens.token_ids.size());
  for (int i = 1; i <= m.n_layers; ++i) {
    auto& ls = t.states.layers[static_cast<std::size_t>(i - 1)];
    const std::string prefix = "states.layer" + std::to_string(i);
    ls.before = r.read(layer_name(i, "h_before"), {d}, prefix + ".h_before");
    ls.post_attn = r.read(layer_name(i, "h_post_attn"), {d}, prefix + ".h_post_attn");
    ls.post_layer = r.read(layer_name(i, "h_post_layer"), {d}, prefix + ".h_post_layer");
    auto& al = t.attn.layers[static_cast<std::size_t>(i - 1)];
    al.n_heads = m.n_heads;
    al.seq_len = static_cast<int>(seq_len);
    al.weights = r.read(layer_name(i, "attn"), {static_cast<std::uint64_t>(m.n_heads), seq_len},
                        "attn.layer" + std::to_string(i));
  }

  if (auto ref = j.find("unembed_ref"); ref != j.end()) {
    if (!ref->is_string()) throw FormatError("manifest: 'unembed_ref' is not a string");
    fs::path p = ref->get<std::string>();
    if (p.is_relative()) p = base_dir / p;
    t.unembed = read_shared_weights(p);
  } else {
    t.unembed = read_unembed_tensors(r, m.vocab_size, m.d_model);
  }

  validate(t);
  return t;
}

void write_trace(const ActivationTrace& trace, const fs::path& path, const WriteOptions& options) {
  fs::path dir = path.parent_path();
  if (dir.empty()) dir = ".";
  spit(path, encode_trace(trace, options, dir));
}

ActivationTrace read_trace(const fs::path& path) {
  const auto bytes = slurp(path);
  try {
    return decode_trace(bytes, path.parent_path());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_shared_weights(const UnembedBlock& block, int vocab_size, int d_model, const fs::path& path) {
  BlobWriter w;
  add_unembed_tensors(w, block, vocab_size, d_model);
  json manifest;
  manifest["format"] = "rscope-weights";
  manifest["format_version"] = kContainerFormatVersion;
  manifest["vocab_size"] = vocab_size;
  manifest["d_model"] = d_model;
  manifest["tensors"] = w.index();
  spit(path, frame(manifest, w.blob()));
}

UnembedBlock read_shared_weights(const fs::path& path) {
  const auto bytes = slurp(path);
  Framed f = unframe(bytes);
  const json& j = f.manifest;
  if (get_as<std::string>(j, "format", "") != "rscope-weights") {
    throw FormatError(path.string() + ": not a shared-weights container");
  }
  BlobReader r(field(j, "tensors", ""), f.blob, f.blob_size);
  return read_unembed_tensors(r, get_as<int>(j, "vocab_size", ""), get_as<int>(j, "d_model", ""));
}

std::vector<fs::path> list_trace_files(const fs::path& dir) {
  std::vector<fs::path> out;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError(dir.string(), "not a directory");
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".rscope") continue;
    if (!is_weights_file(entry.path())) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace rscope
