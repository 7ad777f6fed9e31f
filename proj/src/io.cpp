#include "ovtal/io.hpp"

#include <zlib.h>

#include <bit>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "ovtal/error.hpp"

namespace ovtal {

// ---- TALF ------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'T', 'A', 'L', 'F'};
constexpr std::size_t kHeaderBytes = 16;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::uint32_t crc_of(const std::uint8_t* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::vector<std::uint8_t> encode_talf(const Matrix& f) {
  if (f.rows > std::numeric_limits<std::uint32_t>::max() ||
      f.cols > std::numeric_limits<std::uint32_t>::max())
    throw InvalidInput("encode_talf: matrix too large");
  if (f.values.size() != f.rows * f.cols) throw InvalidInput("encode_talf: inconsistent matrix");
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + 4 * f.values.size() + 4);
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, kTalfVersion);
  put_u32(out, static_cast<std::uint32_t>(f.rows));
  put_u32(out, static_cast<std::uint32_t>(f.cols));
  for (double v : f.values) {
    const auto x = static_cast<float>(v);
    if (!std::isfinite(x)) throw InvalidInput("encode_talf: non-finite feature value");
    put_u32(out, std::bit_cast<std::uint32_t>(x));
  }
  put_u32(out, crc_of(out.data() + kHeaderBytes, out.size() - kHeaderBytes));
  return out;
}

Matrix decode_talf(std::span<const std::uint8_t> b, const std::string& source) {
  using K = DataError::Kind;
  auto fail = [&](K kind, const std::string& msg) -> DataError {
    return DataError(kind, source + ": " + msg);
  };
  if (b.size() < 4) throw fail(K::kTruncation, "truncation: file shorter than the magic bytes");
  if (!std::equal(kMagic, kMagic + 4, b.begin()))
    throw fail(K::kBadMagic, "bad magic: not a TALF feature file");
  if (b.size() < kHeaderBytes) throw fail(K::kTruncation, "truncation: header incomplete");
  const std::uint32_t version = get_u32(b.data() + 4);
  if (version != kTalfVersion)
    throw fail(K::kBadVersion, "bad version " + std::to_string(version) + " (expected " +
                                   std::to_string(kTalfVersion) + ")");
  const std::uint64_t s = get_u32(b.data() + 8), d = get_u32(b.data() + 12);
  const std::uint64_t payload = 4 * s * d;
  const std::uint64_t expected = kHeaderBytes + payload + 4;
  if (b.size() < expected)
    throw fail(K::kTruncation, "truncation: expected " + std::to_string(expected) +
                                   " bytes, found " + std::to_string(b.size()));
  if (b.size() > expected)
    throw fail(K::kSchema, std::to_string(b.size() - expected) + " trailing bytes after checksum");
  const std::uint32_t stored = get_u32(b.data() + kHeaderBytes + payload);
  const std::uint32_t actual = crc_of(b.data() + kHeaderBytes, payload);
  if (stored != actual) throw fail(K::kBadCrc, "bad CRC32: payload is corrupted");

  Matrix m(s, d);
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    const float x = std::bit_cast<float>(get_u32(b.data() + kHeaderBytes + 4 * i));
    if (!std::isfinite(x)) throw fail(K::kSchema, "non-finite feature value");
    m.values[i] = x;
  }
  return m;
}

void write_talf(const fs::path& path, const Matrix& features) {
  const auto bytes = encode_talf(features);
  write_file_atomic(path, {reinterpret_cast<const char*>(bytes.data()), bytes.size()});
}

Matrix read_talf(const fs::path& path) {
  const std::string raw = read_file(path);
  return decode_talf({reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size()},
                     path.string());
}

// ---- files -------------------------------------------------------------------

void write_file_atomic(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec)
      throw DataError(DataError::Kind::kIo, "cannot create directory " +
                                                path.parent_path().string() + ": " + ec.message());
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError(DataError::Kind::kIo, "cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw DataError(DataError::Kind::kIo, "write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw DataError(DataError::Kind::kIo, "cannot move " + tmp.string() + " to " + path.string());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataError::Kind::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw DataError(DataError::Kind::kIo, "read failed: " + path.string());
  return ss.str();
}

Json read_json(const fs::path& path, bool is_config) {
  const std::string text = read_file(path);
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    const std::string msg = path.string() + ": invalid JSON: " + e.what();
    if (is_config) throw ConfigError(msg);
    throw DataError(DataError::Kind::kSchema, msg);
  }
}

std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void require_safe_id(const std::string& id, const std::string& where) {
  bool ok = !id.empty() && id.size() <= 200 && id.front() != '.';
  for (char c : id)
    ok = ok && (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.');
  if (!ok)
    throw DataError(DataError::Kind::kSchema,
                    where + ": video_id '" + id + "' must match [A-Za-z0-9_.-]+ and not start with '.'");
}

// ---- strict JSON reading -------------------------------------------------------

namespace {

static_assert(std::is_same_v<std::size_t, std::uint64_t>, "size_t fields are read as u64");

// Walks one JSON object, remembering which keys were consumed so that
// finish() can reject everything else.
class Fields {
 public:
  Fields(const Json& j, std::string path, bool config) : j_(j), path_(std::move(path)), config_(config) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  [[noreturn]] void fail(const std::string& at, const std::string& msg) const {
    if (config_) throw ConfigError(at + ": " + msg);
    throw DataError(DataError::Kind::kSchema, at + ": " + msg);
  }

  std::string path(const std::string& key) const { return path_ + "." + key; }
  bool config() const { return config_; }

  const Json* find(const std::string& key) {
    auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    seen_.insert(key);
    return &*it;
  }

  const Json& need(const std::string& key) {
    const Json* v = find(key);
    if (!v) fail(path(key), "missing required field");
    return *v;
  }

  template <class T>
  bool opt(const std::string& key, T& out) {
    const Json* v = find(key);
    if (!v) return false;
    convert(*v, path(key), out);
    return true;
  }

  template <class T>
  T req(const std::string& key) {
    T out{};
    convert(need(key), path(key), out);
    return out;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) fail(path(it.key()), "unknown field");
  }

  void convert(const Json& v, const std::string& at, double& out) const {
    if (!v.is_number()) fail(at, "expected a number");
    out = v.get<double>();
    if (!std::isfinite(out)) fail(at, "expected a finite number");
  }
  void convert(const Json& v, const std::string& at, std::uint64_t& out) const {
    const bool ok = v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
    if (!ok) fail(at, "expected a non-negative integer");
    out = v.get<std::uint64_t>();
  }
  void convert(const Json& v, const std::string& at, bool& out) const {
    if (!v.is_boolean()) fail(at, "expected true or false");
    out = v.get<bool>();
  }
  void convert(const Json& v, const std::string& at, std::string& out) const {
    if (!v.is_string()) fail(at, "expected a string");
    out = v.get<std::string>();
  }
  void convert(const Json& v, const std::string& at, std::vector<double>& out) const {
    if (!v.is_array()) fail(at, "expected an array of numbers");
    out.clear();
    out.reserve(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      double x = 0.0;
      convert(v[i], at + "[" + std::to_string(i) + "]", x);
      out.push_back(x);
    }
  }
  void convert(const Json& v, const std::string& at, std::vector<std::string>& out) const {
    if (!v.is_array()) fail(at, "expected an array of strings");
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      std::string s;
      convert(v[i], at + "[" + std::to_string(i) + "]", s);
      out.push_back(std::move(s));
    }
  }

 private:
  const Json& j_;
  std::string path_;
  bool config_;
  std::set<std::string> seen_;
};

void check_header(Fields& f, const char* format) {
  const auto got = f.req<std::string>("format");
  if (got != format) f.fail(f.path("format"), "expected \"" + std::string(format) + "\", got \"" + got + "\"");
  const auto version = f.req<std::uint64_t>("version");
  if (version != 1) f.fail(f.path("version"), "unsupported version " + std::to_string(version));
}

const Json& need_array(Fields& f, const std::string& key) {
  const Json& a = f.need(key);
  if (!a.is_array()) f.fail(f.path(key), "expected an array");
  return a;
}

std::string item_path(const std::string& base, std::size_t i) {
  return base + "[" + std::to_string(i) + "]";
}

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

const char* split_name(Split s) { return s == Split::kBase ? "base" : "novel"; }

}  // namespace

// ---- vocabulary ------------------------------------------------------------------

Json vocabulary_to_json(const Vocabulary& vocab) {
  vocab.validate();
  Json classes = Json::array();
  for (std::size_t c = 0; c < vocab.size(); ++c) {
    const auto row = vocab.prototypes.row(c);
    classes.push_back({{"name", vocab.names[c]},
                       {"split", split_name(vocab.splits[c])},
                       {"prototype", std::vector<double>(row.begin(), row.end())}});
  }
  return {{"format", "ovtal-vocabulary"}, {"version", 1}, {"classes", classes}};
}

Vocabulary vocabulary_from_json(const Json& j) {
  Fields f(j, "$", false);
  check_header(f, "ovtal-vocabulary");
  const Json& classes = need_array(f, "classes");
  f.finish();
  Vocabulary v;
  std::set<std::string> names;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const auto at = item_path("$.classes", i);
    Fields c(classes[i], at, false);
    auto name = c.req<std::string>("name");
    if (name.empty()) c.fail(c.path("name"), "empty class name");
    if (!names.insert(name).second) c.fail(c.path("name"), "duplicate class '" + name + "'");
    const auto split = c.req<std::string>("split");
    if (split != "base" && split != "novel") c.fail(c.path("split"), "expected \"base\" or \"novel\"");
    const auto proto = c.req<std::vector<double>>("prototype");
    c.finish();
    if (i == 0) v.prototypes = Matrix(0, proto.size());
    if (proto.empty() || proto.size() != v.prototypes.cols)
      c.fail(c.path("prototype"), "expected " + std::to_string(v.prototypes.cols) + " values");
    v.names.push_back(std::move(name));
    v.splits.push_back(split == "base" ? Split::kBase : Split::kNovel);
    v.prototypes.values.insert(v.prototypes.values.end(), proto.begin(), proto.end());
    v.prototypes.rows += 1;
  }
  try {
    v.validate();
  } catch (const InvalidInput& e) {
    throw DataError(DataError::Kind::kSchema, std::string("$.classes: ") + e.what());
  }
  return v;
}

// ---- annotations -------------------------------------------------------------------

namespace {

Json video_record(const Video& v, const std::vector<std::string>& names) {
  Json inst = Json::array();
  for (const auto& a : v.instances) {
    Json r = {{"start", a.start}, {"end", a.end}};
    if (a.class_id) {
      if (*a.class_id >= names.size())
        throw InvalidInput("annotations: class id " + std::to_string(*a.class_id) +
                           " has no name (video '" + v.id() + "')");
      r["class_name"] = names[*a.class_id];
    } else {
      r["actionness"] = a.actionness;
    }
    inst.push_back(std::move(r));
  }
  return {{"video_id", v.id()},
          {"duration_snippets", v.features.num_snippets()},
          {"instances", std::move(inst)}};
}

Video parse_video(Fields& f, const std::string& at, const std::map<std::string, std::size_t>& index,
                  bool require_class) {
  Video v;
  v.features.video_id = f.req<std::string>("video_id");
  require_safe_id(v.id(), f.path("video_id"));
  const auto duration = f.req<std::size_t>("duration_snippets");
  if (duration == 0) f.fail(f.path("duration_snippets"), "must be >= 1");
  v.features.features = Matrix(duration, 0);
  const Json& inst = need_array(f, "instances");
  for (std::size_t k = 0; k < inst.size(); ++k) {
    Fields r(inst[k], item_path(at + ".instances", k), false);
    ActionInstance a;
    a.start = r.req<double>("start");
    a.end = r.req<double>("end");
    std::string name;
    if (r.opt("class_name", name)) {
      auto it = index.find(name);
      if (it == index.end()) r.fail(r.path("class_name"), "class '" + name + "' is not in the vocabulary");
      a.class_id = it->second;
      a.actionness = 1.0;
    } else if (require_class) {
      r.fail(r.path("class_name"), "missing required field");
    }
    double s = 0.0;
    if (r.opt("actionness", s)) {
      if (a.class_id) r.fail(r.path("actionness"), "not allowed together with class_name");
      if (s < 0.0 || s > 1.0) r.fail(r.path("actionness"), "must be in [0, 1]");
      a.actionness = s;
    } else if (!a.class_id) {
      r.fail(r.path("class_name"), "need class_name or actionness");
    }
    r.finish();
    if (!(a.start >= 0.0 && a.start < a.end && a.end <= static_cast<double>(duration)))
      r.fail(r.path("start"), "need 0 <= start < end <= duration_snippets");
    v.instances.push_back(a);
  }
  return v;
}

std::map<std::string, std::size_t> name_index(const std::vector<std::string>& names) {
  std::map<std::string, std::size_t> m;
  for (std::size_t i = 0; i < names.size(); ++i) m.emplace(names[i], i);
  return m;
}

}  // namespace

Json annotations_to_json(const std::vector<Video>& videos, const std::vector<std::string>& names) {
  Json out = Json::array();
  for (const auto& v : videos) out.push_back(video_record(v, names));
  return out;
}

std::vector<Video> annotations_from_json(const Json& j, const std::vector<std::string>& names,
                                         bool require_class) {
  if (!j.is_array()) throw DataError(DataError::Kind::kSchema, "$: expected an array of videos");
  const auto index = name_index(names);
  std::vector<Video> out;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto at = item_path("$", i);
    Fields f(j[i], at, false);
    Video v = parse_video(f, at, index, require_class);
    f.finish();
    if (!ids.insert(v.id()).second) f.fail(f.path("video_id"), "duplicate video '" + v.id() + "'");
    out.push_back(std::move(v));
  }
  return out;
}

// ---- model ------------------------------------------------------------------------

Json model_to_json(const ModelFile& m) {
  const auto& s = m.params.shape;
  Json tensors = Json::array();
  for (const auto& t : m.params.tensors) {
    const auto d = t.value.data();
    tensors.push_back({{"name", t.name},
                       {"shape", t.value.shape()},
                       {"values", std::vector<double>(d.begin(), d.end())}});
  }
  return {{"format", "ovtal-model"},
          {"version", 1},
          {"stage", m.stage},
          {"data_dir", m.data_dir},
          {"shape",
           {{"in_dim", s.in_dim},
            {"hidden", s.hidden},
            {"levels", s.levels},
            {"kernel", s.kernel},
            {"base_range", s.base_range}}},
          {"tensors", std::move(tensors)}};
}

ModelFile model_from_json(const Json& j) {
  Fields f(j, "$", false);
  check_header(f, "ovtal-model");
  ModelFile m;
  m.stage = f.req<std::string>("stage");
  m.data_dir = f.req<std::string>("data_dir");
  LocalizerShape shape;
  {
    Fields s(f.need("shape"), "$.shape", false);
    shape.in_dim = s.req<std::size_t>("in_dim");
    shape.hidden = s.req<std::size_t>("hidden");
    shape.levels = s.req<std::size_t>("levels");
    shape.kernel = s.req<std::size_t>("kernel");
    shape.base_range = s.req<double>("base_range");
    s.finish();
  }
  const Json& tensors = need_array(f, "tensors");
  f.finish();

  try {
    m.params = localizer_init(shape, 0);
  } catch (const InvalidInput& e) {
    throw DataError(DataError::Kind::kSchema, std::string("$.shape: ") + e.what());
  }
  if (tensors.size() != m.params.tensors.size())
    f.fail("$.tensors", "expected " + std::to_string(m.params.tensors.size()) + " tensors, found " +
                            std::to_string(tensors.size()));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto at = item_path("$.tensors", i);
    Fields t(tensors[i], at, false);
    auto& slot = m.params.tensors[i];
    const auto name = t.req<std::string>("name");
    if (name != slot.name) t.fail(t.path("name"), "expected '" + slot.name + "', found '" + name + "'");
    const Json& shp = t.need("shape");
    Shape shape_v;
    if (!shp.is_array()) t.fail(t.path("shape"), "expected an array");
    for (std::size_t k = 0; k < shp.size(); ++k) {
      std::uint64_t d = 0;
      t.convert(shp[k], item_path(t.path("shape"), k), d);
      shape_v.push_back(static_cast<std::size_t>(d));
    }
    if (shape_v != slot.value.shape())
      t.fail(t.path("shape"), "expected " + shape_str(slot.value.shape()));
    const auto values = t.req<std::vector<double>>("values");
    t.finish();
    if (values.size() != slot.value.size())
      t.fail(t.path("values"), "expected " + std::to_string(slot.value.size()) + " values");
    auto dst = slot.value.mutable_data();
    std::copy(values.begin(), values.end(), dst.begin());
  }
  return m;
}

// ---- predictions and reports ---------------------------------------------------------

Json predictions_to_json(const std::vector<Prediction>& preds, const Vocabulary& vocab) {
  Json arr = Json::array();
  for (const auto& p : preds) {
    if (p.class_id >= vocab.size()) throw InvalidInput("predictions: class id out of range");
    arr.push_back({{"video_id", p.video_id},
                   {"start", p.start},
                   {"end", p.end},
                   {"class_name", vocab.names[p.class_id]},
                   {"score", p.score}});
  }
  return {{"format", "ovtal-predictions"}, {"version", 1}, {"predictions", std::move(arr)}};
}

std::vector<Prediction> predictions_from_json(const Json& j, const Vocabulary& vocab) {
  Fields f(j, "$", false);
  check_header(f, "ovtal-predictions");
  const Json& arr = need_array(f, "predictions");
  f.finish();
  const auto index = name_index(vocab.names);
  std::vector<Prediction> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    Fields p(arr[i], item_path("$.predictions", i), false);
    Prediction r;
    r.video_id = p.req<std::string>("video_id");
    r.start = p.req<double>("start");
    r.end = p.req<double>("end");
    const auto name = p.req<std::string>("class_name");
    auto it = index.find(name);
    if (it == index.end()) p.fail(p.path("class_name"), "class '" + name + "' is not in the vocabulary");
    r.class_id = it->second;
    r.score = p.req<double>("score");
    p.finish();
    if (!(r.start < r.end)) p.fail(p.path("start"), "need start < end");
    out.push_back(std::move(r));
  }
  return out;
}

Json report_to_json(const EvalReport& r) {
  Json classes = Json::array();
  for (const auto& c : r.classes)
    classes.push_back({{"class_id", c.class_id},
                       {"class_name", c.name},
                       {"split", split_name(c.split)},
                       {"num_gt", c.num_gt},
                       {"ap", c.ap}});
  auto series = [](const std::vector<std::optional<double>>& v) {
    Json a = Json::array();
    for (const auto& x : v) a.push_back(optional_json(x));
    return a;
  };
  return {{"format", "ovtal-report"},
          {"version", 1},
          {"protocol", protocol_name(r.protocol)},
          {"tiou_grid", r.tiou_grid},
          {"classes", std::move(classes)},
          {"map_all", series(r.map_all)},
          {"map_base", series(r.map_base)},
          {"map_novel", series(r.map_novel)},
          {"avg_all", optional_json(r.avg_all)},
          {"avg_base", optional_json(r.avg_base)},
          {"avg_novel", optional_json(r.avg_novel)}};
}

EvalReport report_from_json(const Json& j) {
  Fields f(j, "$", false);
  check_header(f, "ovtal-report");
  EvalReport r;
  const auto proto = f.req<std::string>("protocol");
  try {
    r.protocol = parse_protocol(proto);
  } catch (const InvalidInput& e) {
    f.fail(f.path("protocol"), e.what());
  }
  r.tiou_grid = f.req<std::vector<double>>("tiou_grid");
  const Json& classes = need_array(f, "classes");
  for (std::size_t i = 0; i < classes.size(); ++i) {
    Fields c(classes[i], item_path("$.classes", i), false);
    ClassAp row;
    row.class_id = c.req<std::size_t>("class_id");
    row.name = c.req<std::string>("class_name");
    const auto split = c.req<std::string>("split");
    if (split != "base" && split != "novel") c.fail(c.path("split"), "expected \"base\" or \"novel\"");
    row.split = split == "base" ? Split::kBase : Split::kNovel;
    row.num_gt = c.req<std::size_t>("num_gt");
    row.ap = c.req<std::vector<double>>("ap");
    c.finish();
    if (row.ap.size() != r.tiou_grid.size())
      c.fail(c.path("ap"), "expected one value per grid point");
    r.classes.push_back(std::move(row));
  }

  auto read_series = [&](const char* key) {
    const Json& a = need_array(f, key);
    std::vector<std::optional<double>> out;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i].is_null()) {
        out.emplace_back();
      } else {
        double x = 0.0;
        f.convert(a[i], item_path(f.path(key), i), x);
        out.emplace_back(x);
      }
    }
    return out;
  };
  auto read_opt = [&](const char* key) -> std::optional<double> {
    const Json& v = f.need(key);
    if (v.is_null()) return std::nullopt;
    double x = 0.0;
    f.convert(v, f.path(key), x);
    return x;
  };
  const auto map_all = read_series("map_all"), map_base = read_series("map_base"),
             map_novel = read_series("map_novel");
  const auto avg_all = read_opt("avg_all"), avg_base = read_opt("avg_base"),
             avg_novel = read_opt("avg_novel");
  f.finish();

  recompute_aggregates(r);
  auto same = [](const std::optional<double>& a, const std::optional<double>& b) {
    return a.has_value() == b.has_value() && (!a || std::fabs(*a - *b) <= 1e-9);
  };
  auto same_series = [&](const std::vector<std::optional<double>>& a,
                         const std::vector<std::optional<double>>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (!same(a[i], b[i])) return false;
    return true;
  };
  if (!same_series(map_all, r.map_all)) f.fail("$.map_all", "disagrees with the per-class rows");
  if (!same_series(map_base, r.map_base)) f.fail("$.map_base", "disagrees with the per-class rows");
  if (!same_series(map_novel, r.map_novel)) f.fail("$.map_novel", "disagrees with the per-class rows");
  if (!same(avg_all, r.avg_all)) f.fail("$.avg_all", "disagrees with the per-class rows");
  if (!same(avg_base, r.avg_base)) f.fail("$.avg_base", "disagrees with the per-class rows");
  if (!same(avg_novel, r.avg_novel)) f.fail("$.avg_novel", "disagrees with the per-class rows");
  // Keep the stored values so that a round trip is bit-exact.
  r.map_all = map_all;
  r.map_base = map_base;
  r.map_novel = map_novel;
  r.avg_all = avg_all;
  r.avg_base = avg_base;
  r.avg_novel = avg_novel;
  return r;
}

// ---- joint dataset -----------------------------------------------------------------

Json joint_to_json(const JointDataset& joint, const std::vector<std::string>& names,
                   const std::string& data_dir) {
  Json videos = Json::array();
  for (const auto& v : joint.videos) {
    Json rec = video_record(v, names);
    rec["provenance"] = provenance_name(v.provenance);
    videos.push_back(std::move(rec));
  }
  return {{"format", "ovtal-joint"},
          {"version", 1},
          {"data_dir", data_dir},
          {"videos", std::move(videos)}};
}

JointFile joint_from_json(const Json& j, const std::vector<std::string>& names) {
  Fields f(j, "$", false);
  check_header(f, "ovtal-joint");
  JointFile out;
  out.data_dir = f.req<std::string>("data_dir");
  const Json& videos = need_array(f, "videos");
  f.finish();
  const auto index = name_index(names);
  std::set<std::string> ids;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    const auto at = item_path("$.videos", i);
    Fields v(videos[i], at, false);
    Video video = parse_video(v, at, index, false);
    const auto prov = v.req<std::string>("provenance");
    try {
      video.provenance = parse_provenance(prov);
    } catch (const InvalidInput& e) {
      v.fail(v.path("provenance"), e.what());
    }
    v.finish();
    if (!ids.insert(video.id()).second) v.fail(v.path("video_id"), "duplicate video '" + video.id() + "'");
    out.joint.videos.push_back(std::move(video));
  }
  return out;
}

// ---- configuration -------------------------------------------------------------------

namespace {

void read_nms(Fields& parent, const std::string& key, SoftNmsConfig& nms) {
  const Json* j = parent.find(key);
  if (!j) return;
  Fields f(*j, parent.path(key), true);
  f.opt("iou_threshold", nms.iou_threshold);
  f.opt("min_score", nms.min_score);
  f.opt("top_k", nms.top_k);
  std::string decay;
  if (f.opt("decay", decay)) {
    if (decay == "linear") nms.decay = NmsDecay::kLinear;
    else if (decay == "gaussian") nms.decay = NmsDecay::kGaussian;
    else f.fail(f.path("decay"), "expected \"linear\" or \"gaussian\"");
  }
  f.opt("sigma", nms.sigma);
  f.finish();
}

Json nms_json(const SoftNmsConfig& n) {
  return {{"iou_threshold", n.iou_threshold},
          {"min_score", n.min_score},
          {"top_k", n.top_k},
          {"decay", n.decay == NmsDecay::kLinear ? "linear" : "gaussian"},
          {"sigma", n.sigma}};
}

void read_train(Fields& parent, const std::string& key, TrainConfig& t) {
  const Json* j = parent.find(key);
  if (!j) return;
  Fields f(*j, parent.path(key), true);
  f.opt("max_lr", t.max_lr);
  f.opt("min_lr", t.min_lr);
  f.opt("warmup_epochs", t.warmup_epochs);
  f.opt("main_epochs", t.main_epochs);
  f.opt("batch_size", t.batch_size);
  f.opt("weight_decay", t.weight_decay);
  f.opt("clip_norm", t.clip_norm);
  f.opt("ema_lambda", t.ema_lambda);
  f.opt("focal_alpha", t.loss.focal.alpha);
  f.opt("focal_gamma", t.loss.focal.gamma);
  f.opt("reg_weight", t.loss.reg_weight);
  f.finish();
}

Json train_json(const TrainConfig& t) {
  return {{"max_lr", t.max_lr},
          {"min_lr", t.min_lr},
          {"warmup_epochs", t.warmup_epochs},
          {"main_epochs", t.main_epochs},
          {"batch_size", t.batch_size},
          {"weight_decay", t.weight_decay},
          {"clip_norm", t.clip_norm},
          {"ema_lambda", t.ema_lambda},
          {"focal_alpha", t.loss.focal.alpha},
          {"focal_gamma", t.loss.focal.gamma},
          {"reg_weight", t.loss.reg_weight}};
}

}  // namespace

ExperimentConfig config_from_json(const Json& j) {
  ExperimentConfig c = ExperimentConfig::synthetic_defaults();
  Fields f(j, "$", true);
  std::uint64_t seed = c.seed;
  f.opt("seed", seed);
  f.opt("threads", c.threads);

  if (const Json* s = f.find("synth")) {
    Fields g(*s, "$.synth", true);
    auto& y = c.synth;
    g.opt("num_base", y.num_base);
    g.opt("num_novel", y.num_novel);
    g.opt("dim", y.dim);
    g.opt("labeled_videos", y.labeled_videos);
    g.opt("id_videos", y.id_videos);
    g.opt("od_videos", y.od_videos);
    g.opt("od_multiplier", y.od_multiplier);
    g.opt("val_videos", y.val_videos);
    g.opt("min_snippets", y.min_snippets);
    g.opt("max_snippets", y.max_snippets);
    g.opt("min_instances", y.min_instances);
    g.opt("max_instances", y.max_instances);
    g.opt("min_length", y.min_length);
    g.opt("max_length", y.max_length);
    g.opt("noise_sigma", y.noise_sigma);
    g.opt("background_sigma", y.background_sigma);
    g.opt("distractor_classes", y.distractor_classes);
    g.opt("max_cosine", y.max_cosine);
    g.opt("fixed_length", y.fixed_length);
    g.finish();
  }
  c.model.in_dim = c.synth.dim;
  if (const Json* s = f.find("model")) {
    Fields g(*s, "$.model", true);
    g.opt("in_dim", c.model.in_dim);
    g.opt("hidden", c.model.hidden);
    g.opt("levels", c.model.levels);
    g.opt("kernel", c.model.kernel);
    g.opt("base_range", c.model.base_range);
    g.finish();
  }
  read_train(f, "stage1", c.stage1);
  read_train(f, "stage2", c.stage2);
  if (const Json* s = f.find("pseudo")) {
    Fields g(*s, "$.pseudo", true);
    const bool has_t = g.opt("threshold", c.pseudo.threshold);
    std::string profile;
    if (g.opt("profile", profile)) {
      if (has_t) g.fail(g.path("profile"), "give either threshold or profile, not both");
      try {
        c.pseudo.threshold = profile_threshold(profile);
      } catch (const InvalidInput& e) {
        g.fail(g.path("profile"), e.what());
      }
    }
    g.opt("keep_empty_videos", c.pseudo.keep_empty_videos);
    read_nms(g, "nms", c.pseudo.nms);
    g.finish();
  }
  if (const Json* s = f.find("inference")) {
    Fields g(*s, "$.inference", true);
    g.opt("temperature", c.inference.classifier.temperature);
    g.opt("roi_bins", c.inference.classifier.roi_bins);
    g.opt("top_k_categories", c.inference.classifier.top_k_categories);
    std::string fusion;
    if (g.opt("fusion", fusion)) {
      try {
        c.inference.classifier.fusion = parse_fusion(fusion);
      } catch (const InvalidInput& e) {
        g.fail(g.path("fusion"), e.what());
      }
    }
    read_nms(g, "nms", c.inference.nms);
    g.finish();
  }
  if (const Json* s = f.find("eval")) {
    Fields g(*s, "$.eval", true);
    std::string text;
    if (g.opt("protocol", text)) {
      try {
        c.protocol = parse_protocol(text);
      } catch (const InvalidInput& e) {
        g.fail(g.path("protocol"), e.what());
      }
    }
    if (g.opt("tiou", text)) {
      try {
        c.tiou_grid = parse_tiou_grid(text);
      } catch (const InvalidInput& e) {
        g.fail(g.path("tiou"), e.what());
      }
    }
    g.finish();
  }
  f.finish();
  c.apply_seed(seed);
  try {
    c.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError(std::string("$: ") + e.what());
  }
  return c;
}

Json config_to_json(const ExperimentConfig& c) {
  const auto& y = c.synth;
  std::string grid;
  for (std::size_t i = 0; i < c.tiou_grid.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%.17g", i ? "," : "", c.tiou_grid[i]);
    grid += buf;
  }
  return {{"seed", c.seed},
          {"threads", c.threads},
          {"synth",
           {{"num_base", y.num_base},
            {"num_novel", y.num_novel},
            {"dim", y.dim},
            {"labeled_videos", y.labeled_videos},
            {"id_videos", y.id_videos},
            {"od_videos", y.od_videos},
            {"od_multiplier", y.od_multiplier},
            {"val_videos", y.val_videos},
            {"min_snippets", y.min_snippets},
            {"max_snippets", y.max_snippets},
            {"min_instances", y.min_instances},
            {"max_instances", y.max_instances},
            {"min_length", y.min_length},
            {"max_length", y.max_length},
            {"noise_sigma", y.noise_sigma},
            {"background_sigma", y.background_sigma},
            {"distractor_classes", y.distractor_classes},
            {"max_cosine", y.max_cosine},
            {"fixed_length", y.fixed_length}}},
          {"model",
           {{"in_dim", c.model.in_dim},
            {"hidden", c.model.hidden},
            {"levels", c.model.levels},
            {"kernel", c.model.kernel},
            {"base_range", c.model.base_range}}},
          {"stage1", train_json(c.stage1)},
          {"stage2", train_json(c.stage2)},
          {"pseudo",
           {{"threshold", c.pseudo.threshold},
            {"keep_empty_videos", c.pseudo.keep_empty_videos},
            {"nms", nms_json(c.pseudo.nms)}}},
          {"inference",
           {{"temperature", c.inference.classifier.temperature},
            {"roi_bins", c.inference.classifier.roi_bins},
            {"top_k_categories", c.inference.classifier.top_k_categories},
            {"fusion", fusion_name(c.inference.classifier.fusion)},
            {"nms", nms_json(c.inference.nms)}}},
          {"eval", {{"protocol", protocol_name(c.protocol)}, {"tiou", grid}}}};
}

// ---- dataset directories ------------------------------------------------------------

std::vector<std::string> DatasetDir::all_class_names() const {
  auto names = vocab.names;
  names.insert(names.end(), hidden_classes.begin(), hidden_classes.end());
  return names;
}

const std::vector<Video>& DatasetDir::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "id") return id;
  if (name == "od") return od;
  if (name == "val") return val;
  throw InvalidInput("unknown split '" + name + "' (expected train, id, od or val)");
}

namespace {

constexpr const char* kSplits[] = {"train", "id", "od", "val"};

}  // namespace

void write_dataset(const fs::path& dir, const Benchmark& b, const ExperimentConfig& cfg) {
  std::vector<std::string> hidden;
  for (std::size_t i = 0; i < b.distractors.rows; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "distractor_%04zu", b.vocab.size() + i);
    hidden.push_back(buf);
  }
  auto names = b.vocab.names;
  names.insert(names.end(), hidden.begin(), hidden.end());

  const std::vector<const std::vector<Video>*> splits = {&b.labeled_train, &b.unlabeled_id,
                                                         &b.unlabeled_od, &b.val};
  Json counts = Json::object();
  for (std::size_t s = 0; s < 4; ++s) {
    for (const auto& v : *splits[s]) {
      require_safe_id(v.id(), kSplits[s]);
      write_talf(dir / "features" / (v.id() + ".talf"), v.features.features);
    }
    write_file_atomic(dir / (std::string(kSplits[s]) + ".json"),
                      dump_json(annotations_to_json(*splits[s], names)));
    counts[kSplits[s]] = splits[s]->size();
  }
  write_file_atomic(dir / "vocabulary.json", dump_json(vocabulary_to_json(b.vocab)));
  Json index = {{"format", "ovtal-dataset"},
                {"version", 1},
                {"seed", cfg.synth.seed},
                {"hidden_classes", hidden},
                {"videos", counts},
                {"config", config_to_json(cfg)["synth"]}};
  write_file_atomic(dir / "dataset.json", dump_json(index));
}

void load_features(const fs::path& data_dir, std::vector<Video>& videos) {
  for (auto& v : videos) {
    require_safe_id(v.id(), data_dir.string());
    const auto path = data_dir / "features" / (v.id() + ".talf");
    Matrix m = read_talf(path);
    if (m.rows != v.features.num_snippets())
      throw DataError(DataError::Kind::kSchema,
                      path.string() + ": " + std::to_string(m.rows) +
                          " snippets, annotation says " + std::to_string(v.features.num_snippets()));
    v.features.features = std::move(m);
  }
}

DatasetDir read_dataset(const fs::path& dir) {
  DatasetDir d;
  {
    const Json j = read_json(dir / "dataset.json");
    Fields f(j, "$", false);
    check_header(f, "ovtal-dataset");
    f.need("seed");
    f.need("videos");
    f.need("config");
    d.hidden_classes = f.req<std::vector<std::string>>("hidden_classes");
    f.finish();
  }
  d.vocab = vocabulary_from_json(read_json(dir / "vocabulary.json"));
  const auto names = d.all_class_names();
  std::vector<Video>* dst[] = {&d.train, &d.id, &d.od, &d.val};
  const Provenance prov[] = {Provenance::kLabeled, Provenance::kInDomain, Provenance::kOpenDomain,
                             Provenance::kLabeled};
  for (std::size_t s = 0; s < 4; ++s) {
    const auto path = dir / (std::string(kSplits[s]) + ".json");
    try {
      *dst[s] = annotations_from_json(read_json(path), names, true);
    } catch (const DataError& e) {
      throw DataError(e.kind(), path.string() + ": " + e.what());
    }
    for (auto& v : *dst[s]) v.provenance = prov[s];
    load_features(dir, *dst[s]);
    for (const auto& v : *dst[s])
      if (v.features.dim() != d.vocab.dim())
        throw DataError(DataError::Kind::kSchema, "features of '" + v.id() + "' have dimension " +
                                                      std::to_string(v.features.dim()) +
                                                      ", vocabulary has " + std::to_string(d.vocab.dim()));
  }
  return d;
}

// ---- manifests ------------------------------------------------------------------------

void write_manifest(const fs::path& artifact, const Manifest& m) {
  fs::path path;
  if (fs::is_directory(artifact)) {
    path = artifact / "manifest.json";
  } else {
    path = artifact;
    path += ".manifest.json";
  }
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm);
  Json j = {{"format", "ovtal-manifest"},
            {"version", 1},
            {"tool_version", OVTAL_VERSION},
            {"command", m.command},
            {"seed", m.seed},
            {"config_hash", m.config_hash},
            {"inputs", m.inputs},
            {"outputs", m.outputs},
            {"created_at", stamp}};
  write_file_atomic(path, dump_json(j));
}

}  // namespace ovtal
