#ifndef PBNLC_IO_HPP
#define PBNLC_IO_HPP

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

#include "pbnlc/complexity.hpp"
#include "pbnlc/features.hpp"
#include "pbnlc/mlp.hpp"
#include "pbnlc/rx.hpp"

namespace pbnlc {

using nlohmann::json;

class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kDatasetSchemaVersion = 1;
inline constexpr int kCheckpointSchemaVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'P', 'B', 'N', 'L', 'C', 'K', 'P', 'T'};

// ---- bytes and hashes ----------------------------------------------------

using Bytes = std::vector<unsigned char>;

inline Bytes read_bytes(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot open " + p.string());
  return Bytes(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

inline void write_bytes(const std::filesystem::path& p, const void* data, std::size_t n) {
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
  }
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + p.string());
  f.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!f) throw IoError("write failed: " + p.string());
}

inline void write_text(const std::filesystem::path& p, const std::string& s) { write_bytes(p, s.data(), s.size()); }

/// Git blob id: SHA-1 of "blob <size>\0" followed by the content.
inline std::string git_blob_hash(const void* data, std::size_t n) {
  const std::string head = "blob " + std::to_string(n) + std::string(1, '\0');
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw IoError("EVP_MD_CTX_new failed");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, head.data(), head.size()) == 1 &&
                  EVP_DigestUpdate(ctx, data, n) == 1 && EVP_DigestFinal_ex(ctx, md, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw IoError("SHA-1 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

inline std::string git_blob_hash(const std::string& s) { return git_blob_hash(s.data(), s.size()); }

namespace detail {

inline void put_u64(Bytes& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

inline void put_f64(Bytes& out, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  put_u64(out, v);
}

struct Reader {
  const Bytes& b;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > b.size()) throw IoError("truncated file");
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[pos + static_cast<std::size_t>(i)]) << (8 * i);
    pos += 8;
    return v;
  }
  double f64() {
    const std::uint64_t v = u64();
    double d;
    std::memcpy(&d, &v, 8);
    return d;
  }
};

}  // namespace detail

// ---- datasets ------------------------------------------------------------

/// Aligned symbol pairs plus the JSON metadata stored next to them.
struct Dataset {
  AlignedPairs pairs;
  json meta;
  std::string payload_hash;
};

/// Payload: little-endian f64, interleaved re/im; tx.x, tx.y, rx.x, rx.y.
inline Bytes dataset_payload(const AlignedPairs& p) {
  Bytes out;
  out.reserve(p.size() * 4 * 16);
  for (const SymbolBlock* s : {&p.tx, &p.rx})
    for (int pol = 0; pol < 2; ++pol)
      for (const cplx& v : s->pol(pol)) {
        detail::put_f64(out, v.real());
        detail::put_f64(out, v.imag());
      }
  return out;
}

/// Writes <stem>.bin and the <stem>.json sidecar; returns the payload hash.
inline std::string save_dataset(const std::filesystem::path& stem, const AlignedPairs& p, const json& meta) {
  if (p.tx.size() != p.rx.size()) throw std::invalid_argument("save_dataset: tx/rx length mismatch");
  const Bytes payload = dataset_payload(p);
  const std::string hash = git_blob_hash(payload.data(), payload.size());
  std::filesystem::path bin = stem;
  bin += ".bin";
  std::filesystem::path side = stem;
  side += ".json";
  write_bytes(bin, payload.data(), payload.size());
  const json j{{"schema_version", kDatasetSchemaVersion},
               {"payload", bin.filename().string()},
               {"payload_hash", hash},
               {"n_symbols", p.size()},
               {"baud_rate_hz", p.tx.baud_rate_hz},
               {"lag", p.lag},
               {"phase_rad", {p.phase_rad[0], p.phase_rad[1]}},
               {"scale", {p.scale[0], p.scale[1]}},
               {"layout", "f64le interleaved re/im; tx.x, tx.y, rx.x, rx.y"},
               {"meta", meta}};
  write_text(side, j.dump(2) + "\n");
  return hash;
}

/// Reads a dataset from its sidecar and verifies the payload hash.
inline Dataset load_dataset(const std::filesystem::path& sidecar) {
  std::ifstream f(sidecar);
  if (!f) throw IoError("cannot open " + sidecar.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error& e) {
    throw IoError("bad dataset sidecar " + sidecar.string() + ": " + e.what());
  }
  if (j.value("schema_version", 0) != kDatasetSchemaVersion) throw IoError("unsupported dataset schema version");
  const Bytes payload = read_bytes(sidecar.parent_path() / j.at("payload").get<std::string>());
  const std::string hash = git_blob_hash(payload.data(), payload.size());
  if (hash != j.at("payload_hash").get<std::string>()) throw IoError("dataset payload hash mismatch: " + sidecar.string());
  const auto n = j.at("n_symbols").get<std::size_t>();
  if (payload.size() != n * 4 * 16) throw IoError("dataset payload size mismatch");
  Dataset d;
  detail::Reader r{payload};
  for (SymbolBlock* s : {&d.pairs.tx, &d.pairs.rx}) {
    s->baud_rate_hz = j.value("baud_rate_hz", 0.0);
    for (int pol = 0; pol < 2; ++pol) {
      s->pol(pol).resize(n);
      for (auto& v : s->pol(pol)) {
        const double re = r.f64();
        v = {re, r.f64()};
      }
    }
  }
  d.pairs.lag = j.value("lag", 0);
  for (int p = 0; p < 2; ++p) {
    d.pairs.phase_rad[p] = j.at("phase_rad").at(static_cast<std::size_t>(p)).get<double>();
    d.pairs.scale[p] = j.at("scale").at(static_cast<std::size_t>(p)).get<double>();
  }
  d.meta = j.value("meta", json::object());
  d.payload_hash = hash;
  return d;
}

// ---- checkpoints ---------------------------------------------------------

/// Layout: magic "PBNLCKPT", u64 header length, JSON header, then f64 weights
/// and biases layer by layer, input_scale, output_scale, then the weight masks
/// packed LSB-first per layer.
inline Bytes checkpoint_bytes(const MlpModel& m, const json& meta) {
  json layers = json::array();
  for (const auto& L : m.layers) layers.push_back({{"in", L.in}, {"out", L.out}});
  const json header{{"schema_version", kCheckpointSchemaVersion},
                    {"spec", {{"n_inputs", m.spec.n_inputs},
                              {"hidden", m.spec.hidden},
                              {"n_outputs", m.spec.n_outputs},
                              {"activation", to_string(m.spec.activation)}}},
                    {"layers", layers},
                    {"scales_calibrated", m.scales_calibrated},
                    {"meta", meta}};
  const std::string hs = header.dump();
  Bytes out(kCheckpointMagic, kCheckpointMagic + 8);
  detail::put_u64(out, hs.size());
  out.insert(out.end(), hs.begin(), hs.end());
  for (const auto& L : m.layers) {
    for (double v : L.w) detail::put_f64(out, v);
    for (double v : L.b) detail::put_f64(out, v);
  }
  detail::put_f64(out, m.input_scale);
  detail::put_f64(out, m.output_scale);
  for (const auto& L : m.layers) {
    Bytes packed((L.mask.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < L.mask.size(); ++i)
      if (L.mask[i]) packed[i / 8] |= static_cast<unsigned char>(1u << (i % 8));
    out.insert(out.end(), packed.begin(), packed.end());
  }
  return out;
}

struct Checkpoint {
  MlpModel model;
  json meta;
};

inline Checkpoint parse_checkpoint(const Bytes& b) {
  if (b.size() < 16 || std::memcmp(b.data(), kCheckpointMagic, 8) != 0) throw IoError("not a checkpoint file");
  detail::Reader r{b, 8};
  const std::uint64_t hlen = r.u64();
  r.need(hlen);
  json header;
  try {
    header = json::parse(b.begin() + static_cast<long>(r.pos), b.begin() + static_cast<long>(r.pos + hlen));
  } catch (const json::parse_error& e) {
    throw IoError(std::string("bad checkpoint header: ") + e.what());
  }
  r.pos += hlen;
  if (header.value("schema_version", 0) != kCheckpointSchemaVersion) throw IoError("unsupported checkpoint schema");
  Checkpoint c;
  MlpSpec& s = c.model.spec;
  const json& js = header.at("spec");
  s.n_inputs = js.at("n_inputs").get<int>();
  s.hidden = js.at("hidden").get<std::vector<int>>();
  s.n_outputs = js.at("n_outputs").get<int>();
  s.activation = activation_from_string(js.at("activation").get<std::string>());
  s.validate();
  for (const auto& jl : header.at("layers")) {
    Layer L;
    L.in = jl.at("in").get<int>();
    L.out = jl.at("out").get<int>();
    if (L.in < 1 || L.out < 1) throw IoError("bad layer shape in checkpoint");
    const auto cnt = static_cast<std::size_t>(L.in) * static_cast<std::size_t>(L.out);
    L.w.resize(cnt);
    L.b.resize(static_cast<std::size_t>(L.out));
    for (auto& v : L.w) v = r.f64();
    for (auto& v : L.b) v = r.f64();
    c.model.layers.push_back(std::move(L));
  }
  if (c.model.layers.size() != s.hidden.size() + 1) throw IoError("checkpoint layer count does not match its spec");
  c.model.input_scale = r.f64();
  c.model.output_scale = r.f64();
  for (auto& L : c.model.layers) {
    const std::size_t nb = (L.w.size() + 7) / 8;
    r.need(nb);
    L.mask.resize(L.w.size());
    for (std::size_t i = 0; i < L.w.size(); ++i) L.mask[i] = (b[r.pos + i / 8] >> (i % 8)) & 1u;
    r.pos += nb;
  }
  if (r.pos != b.size()) throw IoError("trailing bytes in checkpoint");
  c.model.scales_calibrated = header.value("scales_calibrated", false);
  c.meta = header.value("meta", json::object());
  return c;
}

/// Writes the checkpoint and returns its content hash.
inline std::string save_checkpoint(const std::filesystem::path& p, const MlpModel& m, const json& meta) {
  const Bytes b = checkpoint_bytes(m, meta);
  write_bytes(p, b.data(), b.size());
  return git_blob_hash(b.data(), b.size());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& p) { return parse_checkpoint(read_bytes(p)); }

/// Refuses a model whose training data is the dataset about to be evaluated.
inline void check_not_training_data(const json& checkpoint_meta, const std::string& dataset_hash) {
  if (checkpoint_meta.contains("train_dataset_hash") &&
      checkpoint_meta.at("train_dataset_hash").get<std::string>() == dataset_hash)
    throw std::invalid_argument("refusing to evaluate a model on its own training dataset (" + dataset_hash + ")");
}

// ---- manifests and tables ------------------------------------------------

inline std::string utc_timestamp() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Hash of the manifest content with the timestamp removed, so identical runs
/// share a hash.
inline std::string manifest_hash(json manifest) {
  manifest.erase("created_utc");
  manifest.erase("manifest_hash");
  return git_blob_hash(manifest.dump());
}

/// Stamps the manifest with its hash and the time, writes it, returns the hash.
inline std::string write_manifest(const std::filesystem::path& p, json manifest) {
  const std::string h = manifest_hash(manifest);
  manifest["manifest_hash"] = h;
  manifest["created_utc"] = utc_timestamp();
  write_text(p, manifest.dump(2) + "\n");
  return h;
}

inline json index_set_manifest(const TripletSet& t) {
  json pairs = json::array();
  for (const auto& p : t.pairs) pairs.push_back({p.m, p.n});
  return {{"window", t.window}, {"product_limit", t.product_limit}, {"halved", t.halved},
          {"count", t.size()}, {"pairs", pairs}};
}

inline json index_set_manifest(const QuintupleSet& q) {
  json items = json::array();
  for (const auto& i : q.items) items.push_back({i.outer.m, i.outer.n, i.inner.m, i.inner.n, i.slot});
  return {{"count", q.size()}, {"items", items}, {"item_layout", "outer.m, outer.n, inner.m, inner.n, slot"}};
}

/// Shortest round-trip decimal form of a double.
inline std::string fmt_num(double v) {
  char buf[40];
  for (int prec = 6; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string to_csv(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += csv_escape(cells[i]);
    }
    out += '\n';
  };
  line(header);
  for (const auto& r : rows) {
    if (r.size() != header.size()) throw std::invalid_argument("to_csv: row width does not match the header");
    line(r);
  }
  return out;
}

// Complexity tables: one column per technique label.
inline std::string complexity_csv(const ComplexityReport& rep) {
  std::vector<std::string> header{"metric"};
  std::vector<std::string> rm{"rm_per_symbol"}, delta{"delta_vs_" + rep.reference}, pct{"reduction_pct_vs_" + rep.reference};
  for (const auto& r : rep.rows) {
    header.push_back(r.technique);
    rm.push_back(std::to_string(r.rm_per_symbol));
    delta.push_back(r.delta_vs_reference ? std::to_string(*r.delta_vs_reference) : "");
    pct.push_back(r.reduction_pct ? fmt_num(*r.reduction_pct) : "");
  }
  std::vector<std::vector<std::string>> rows{rm};
  if (!rep.reference.empty()) {
    rows.push_back(delta);
    rows.push_back(pct);
  }
  return to_csv(header, rows);
}

inline json complexity_json(const ComplexityReport& rep) {
  json rows = json::array();
  for (const auto& r : rep.rows) {
    json j{{"technique", r.technique}, {"rm_per_symbol", r.rm_per_symbol}};
    if (r.delta_vs_reference) j["delta_vs_reference"] = *r.delta_vs_reference;
    if (r.reduction_pct) j["reduction_pct"] = *r.reduction_pct;
    rows.push_back(j);
  }
  return {{"reference", rep.reference.empty() ? json(nullptr) : json(rep.reference)}, {"rows", rows}};
}

}  // namespace pbnlc

#endif  // PBNLC_IO_HPP
