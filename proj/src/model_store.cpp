#include "orca/model_store.hpp"

#include "orca/gan_ed.hpp"
#include "orca/lstm_ed.hpp"
#include "orca/marima.hpp"
#include "orca/ocsvm.hpp"

#include <bit>
#include <fstream>
#include <iterator>

namespace orca {

namespace {

constexpr char kMagic[4] = {'O', 'R', 'C', 'A'};

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

class Writer {
 public:
  template <typename T>
  void uint(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void i64(std::int64_t v) { uint(static_cast<std::uint64_t>(v)); }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  void bytes(std::string_view s) { out_.append(s); }
  std::string& str() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  template <typename T>
  T uint() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<T>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(uint<std::uint64_t>()); }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw Error(ErrorCode::CorruptStore, "model file truncated");
  }

  std::string_view in_;
  std::size_t pos_ = 0;
};

std::vector<double> encode_hyper(const ModelSpec& spec) {
  return std::visit(
      [](const auto& h) -> std::vector<double> {
        using T = std::decay_t<decltype(h)>;
        std::vector<double> out;
        if constexpr (std::is_same_v<T, OcsvmHyper>) {
          out = {h.nu, h.rbf_gamma};
        } else if constexpr (std::is_same_v<T, MarimaHyper>) {
          out = {double(h.p), double(h.d), double(h.q)};
        } else if constexpr (std::is_same_v<T, GanEdHyper>) {
          out = {double(h.latent_dim), double(h.epochs), h.lr, double(h.batch), h.lambda_rec, h.alpha};
          for (int w : h.layers) out.push_back(w);
        } else {
          out = {double(h.epochs), h.lr, double(h.batch)};
          for (int w : h.layers) out.push_back(w);
        }
        return out;
      },
      spec.hyper);
}

ModelSpec decode_hyper(ModelFamily family, const std::vector<double>& v) {
  auto need = [&](std::size_t n) {
    if (v.size() < n) throw Error(ErrorCode::CorruptStore, "hyperparameter block too short");
  };
  switch (family) {
    case ModelFamily::OCSVM:
      need(2);
      return {OcsvmHyper{v[0], v[1]}};
    case ModelFamily::MARIMA:
      need(3);
      return {MarimaHyper{int(v[0]), int(v[1]), int(v[2])}};
    case ModelFamily::GANED: {
      need(6);
      GanEdHyper h;
      h.latent_dim = int(v[0]);
      h.epochs = int(v[1]);
      h.lr = v[2];
      h.batch = int(v[3]);
      h.lambda_rec = v[4];
      h.alpha = v[5];
      h.layers.assign(v.begin() + 6, v.end());
      return {h};
    }
    case ModelFamily::LSTMED: {
      need(3);
      LstmEdHyper h;
      h.epochs = int(v[0]);
      h.lr = v[1];
      h.batch = int(v[2]);
      h.layers.assign(v.begin() + 3, v.end());
      return {h};
    }
  }
  throw Error(ErrorCode::CorruptStore, "unknown family tag");
}

std::shared_ptr<const FamilyModel> rebuild(ModelFamily family, const std::vector<std::int64_t>& structure,
                                           const Vector& params) {
  switch (family) {
    case ModelFamily::OCSVM: return std::make_shared<OcsvmModel>(OcsvmModel::from_parameters(structure, params));
    case ModelFamily::MARIMA: return std::make_shared<MarimaModel>(MarimaModel::from_parameters(structure, params));
    case ModelFamily::GANED: return std::make_shared<GanEdModel>(GanEdModel::from_parameters(structure, params));
    case ModelFamily::LSTMED: return std::make_shared<LstmEdModel>(LstmEdModel::from_parameters(structure, params));
  }
  throw Error(ErrorCode::CorruptStore, "unknown family tag");
}

}  // namespace

std::string encode_model(const TrainedModel& model) {
  const auto& schema = model.schema();
  const Vector params = model.parameters();
  const auto structure = model.structure();
  const auto calibration = model.calibration();
  const auto hyper = encode_hyper(model.spec());

  Writer w;
  w.bytes(std::string_view(kMagic, 4));
  w.uint<std::uint16_t>(kModelFormatVersion);
  w.uint<std::uint8_t>(static_cast<std::uint8_t>(model.family()));
  w.uint<std::uint8_t>(static_cast<std::uint8_t>(schema.level()));
  w.uint<std::uint64_t>(schema.digest());
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(schema.dim()));
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(schema.seq_len()));
  w.uint<std::uint8_t>(schema.time_series() ? 1 : 0);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(calibration.size()));
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(structure.size()));
  w.uint<std::uint64_t>(static_cast<std::uint64_t>(params.size()));
  w.i64(model.trained_at());
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(model.version()));
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(hyper.size()));
  for (double h : hyper) w.f64(h);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(schema.names().size()));
  for (const auto& name : schema.names()) {
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.bytes(name);
  }
  for (auto s : structure) w.i64(s);
  for (Eigen::Index i = 0; i < params.size(); ++i) w.f64(params[i]);
  for (double c : calibration) w.f64(c);
  const auto& norm = model.norm_stats();
  for (const Vector* v : {&norm.mean, &norm.stddev, &norm.median})
    for (Eigen::Index i = 0; i < v->size(); ++i) w.f64((*v)[i]);
  w.uint<std::uint64_t>(fnv1a(w.str()));
  return std::move(w.str());
}

TrainedModel decode_model(std::string_view bytes) {
  Reader r(bytes);
  if (r.bytes(4) != std::string_view(kMagic, 4)) throw Error(ErrorCode::CorruptStore, "bad magic");
  const auto version = r.uint<std::uint16_t>();
  if (version > kModelFormatVersion)
    throw Error(ErrorCode::VersionMismatch, "model format version " + std::to_string(version) +
                                                " is newer than supported " + std::to_string(kModelFormatVersion));
  if (version == 0) throw Error(ErrorCode::CorruptStore, "model format version 0");
  const auto family_tag = r.uint<std::uint8_t>();
  const auto level_tag = r.uint<std::uint8_t>();
  if (family_tag >= kFamilyCount || level_tag >= kLevelCount) throw Error(ErrorCode::CorruptStore, "bad tag");
  const auto digest = r.uint<std::uint64_t>();
  const auto dim = r.uint<std::uint32_t>();
  const auto seq_len = r.uint<std::uint32_t>();
  const bool ts = r.uint<std::uint8_t>() != 0;
  const auto n_cal = r.uint<std::uint32_t>();
  const auto n_struct = r.uint<std::uint32_t>();
  const auto n_params = r.uint<std::uint64_t>();
  const Tick trained_at = r.i64();
  const auto model_version = r.uint<std::uint32_t>();
  const auto n_hyper = r.uint<std::uint32_t>();
  if (n_hyper > 4096 || n_struct > 4096 || n_params > (bytes.size() / 8) || n_cal > bytes.size() / 8)
    throw Error(ErrorCode::CorruptStore, "implausible block lengths");
  std::vector<double> hyper(n_hyper);
  for (auto& h : hyper) h = r.f64();
  const auto n_names = r.uint<std::uint32_t>();
  if (n_names != dim) throw Error(ErrorCode::CorruptStore, "feature count disagrees with dim");
  std::vector<std::string> names;
  names.reserve(n_names);
  for (std::uint32_t i = 0; i < n_names; ++i) {
    const auto len = r.uint<std::uint32_t>();
    names.emplace_back(r.bytes(len));
  }
  std::vector<std::int64_t> structure(n_struct);
  for (auto& s : structure) s = r.i64();
  Vector params(static_cast<Eigen::Index>(n_params));
  for (Eigen::Index i = 0; i < params.size(); ++i) params[i] = r.f64();
  std::vector<double> calibration(n_cal);
  for (auto& c : calibration) c = r.f64();
  NormStats norm{Vector(dim), Vector(dim), Vector(dim)};
  for (Vector* v : {&norm.mean, &norm.stddev, &norm.median})
    for (Eigen::Index i = 0; i < v->size(); ++i) (*v)[i] = r.f64();
  const std::size_t body_end = r.pos();
  const auto checksum = r.uint<std::uint64_t>();
  if (checksum != fnv1a(bytes.substr(0, body_end))) throw Error(ErrorCode::CorruptStore, "checksum mismatch");

  const auto level = static_cast<BehaviorLevel>(level_tag);
  FeatureSchema schema = ts ? FeatureSchema::sequences(level, std::move(names), static_cast<int>(seq_len))
                            : FeatureSchema::vectors(level, std::move(names));
  if (schema.digest() != digest) throw Error(ErrorCode::CorruptStore, "schema digest mismatch");

  const auto family = static_cast<ModelFamily>(family_tag);
  ModelSpec spec = decode_hyper(family, hyper);
  return TrainedModel(std::move(spec), std::move(schema), std::move(norm), rebuild(family, structure, params),
                      std::move(calibration), trained_at, static_cast<int>(model_version));
}

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  const std::string bytes = encode_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "short write to " + path.string());
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_model(bytes);
}

std::string model_file_name(const std::string& device_type, BehaviorLevel level) {
  return device_type + "__" + std::string(to_string(level)) + ".orca";
}

}  // namespace orca
