#include "echoplane/rirset_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "echoplane/error.hpp"

namespace echoplane {

namespace {

using nlohmann::json;

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

// KSDATAFORMAT_SUBTYPE_IEEE_FLOAT tail shared by all extensible subtypes.
constexpr unsigned char kSubtypeTail[14] = {0x00, 0x00, 0x00, 0x00, 0x10, 0x00, 0x80,
                                            0x00, 0x00, 0xAA, 0x00, 0x38, 0x9B, 0x71};

static_assert(std::endian::native == std::endian::little, "WAV codec assumes little endian");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(std::string_view in, std::size_t pos) {
  if (pos + sizeof(T) > in.size()) throw Error(Errc::Format, "truncated WAV data");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  return v;
}

json point_json(const Point3& p) { return json::array({p.x(), p.y(), p.z()}); }

Point3 json_point(const json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(Errc::Format, "expected [x, y, z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json points_json(const std::vector<Point3>& pts) {
  json arr = json::array();
  for (const auto& p : pts) arr.push_back(point_json(p));
  return arr;
}

std::vector<Point3> json_points(const json& j) {
  std::vector<Point3> pts;
  for (const auto& e : j) pts.push_back(json_point(e));
  return pts;
}

json plane_json(const Plane& p) {
  return json::array({p.normal().x(), p.normal().y(), p.normal().z(), p.offset()});
}

Plane json_plane(const json& j) {
  if (!j.is_array() || j.size() != 4) throw Error(Errc::Format, "expected plane [v1, v2, v3, d]");
  return Plane(Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>()), j[3].get<double>());
}

}  // namespace

std::string encode_wav(const WavData& wav) {
  const auto nch = static_cast<std::uint16_t>(wav.channels.size());
  if (nch == 0) throw Error(Errc::InvalidArgument, "WAV needs at least one channel");
  const std::size_t frames = wav.channels.front().size();
  for (const auto& ch : wav.channels) {
    if (ch.size() != frames) throw Error(Errc::ShapeMismatch, "channels differ in length");
  }
  const bool extensible = nch > 2;
  const std::uint32_t fmt_size = extensible ? 40 : 18;
  const std::uint32_t data_size = static_cast<std::uint32_t>(frames * nch * 4);
  const auto rate = static_cast<std::uint32_t>(std::lround(wav.fs));

  std::string out;
  out.reserve(data_size + 80);
  out += "RIFF";
  put<std::uint32_t>(out, 4 + 8 + fmt_size + 8 + data_size);
  out += "WAVE";
  out += "fmt ";
  put<std::uint32_t>(out, fmt_size);
  put<std::uint16_t>(out, extensible ? kFormatExtensible : kFormatFloat);
  put<std::uint16_t>(out, nch);
  put<std::uint32_t>(out, rate);
  put<std::uint32_t>(out, rate * nch * 4);
  put<std::uint16_t>(out, static_cast<std::uint16_t>(nch * 4));
  put<std::uint16_t>(out, 32);
  if (extensible) {
    put<std::uint16_t>(out, 22);
    put<std::uint16_t>(out, 32);
    put<std::uint32_t>(out, 0);  // no speaker mapping
    put<std::uint16_t>(out, kFormatFloat);
    out.append(reinterpret_cast<const char*>(kSubtypeTail), sizeof(kSubtypeTail));
  } else {
    put<std::uint16_t>(out, 0);
  }
  out += "data";
  put<std::uint32_t>(out, data_size);
  for (std::size_t n = 0; n < frames; ++n) {
    for (const auto& ch : wav.channels) put<float>(out, ch[n]);
  }
  return out;
}

WavData decode_wav(std::string_view in) {
  if (in.size() < 12 || in.substr(0, 4) != "RIFF" || in.substr(8, 4) != "WAVE") {
    throw Error(Errc::Format, "not a RIFF/WAVE file");
  }
  std::uint16_t format = 0, nch = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= in.size()) {
    const std::string_view id = in.substr(pos, 4);
    const auto size = get<std::uint32_t>(in, pos + 4);
    const std::size_t body = pos + 8;
    if (id == "fmt ") {
      format = get<std::uint16_t>(in, body);
      nch = get<std::uint16_t>(in, body + 2);
      rate = get<std::uint32_t>(in, body + 4);
      bits = get<std::uint16_t>(in, body + 14);
      if (format == kFormatExtensible) format = get<std::uint16_t>(in, body + 24);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw Error(Errc::Format, "data chunk before fmt chunk");
      if (nch == 0) throw Error(Errc::Format, "zero channels");
      const std::size_t bytes_per = bits / 8;
      const bool ok = (format == kFormatPcm && (bits == 16 || bits == 24 || bits == 32)) ||
                      (format == kFormatFloat && (bits == 32 || bits == 64));
      if (!ok) throw Error(Errc::Format, "unsupported sample format");
      const std::size_t avail = std::min<std::size_t>(size, in.size() - body);
      const std::size_t frames = avail / (bytes_per * nch);
      WavData wav;
      wav.fs = rate;
      wav.channels.assign(nch, std::vector<float>(frames));
      std::size_t p = body;
      for (std::size_t n = 0; n < frames; ++n) {
        for (std::size_t c = 0; c < nch; ++c, p += bytes_per) {
          float v = 0.0f;
          if (format == kFormatFloat) {
            v = bits == 32 ? get<float>(in, p) : static_cast<float>(get<double>(in, p));
          } else if (bits == 16) {
            v = static_cast<float>(get<std::int16_t>(in, p) / 32768.0);
          } else if (bits == 24) {
            const auto b0 = static_cast<unsigned char>(in[p]);
            const auto b1 = static_cast<unsigned char>(in[p + 1]);
            const auto b2 = static_cast<unsigned char>(in[p + 2]);
            std::int32_t s = b0 | (b1 << 8) | (b2 << 16);
            if (s & 0x800000) s -= 0x1000000;
            v = static_cast<float>(s / 8388608.0);
          } else {
            v = static_cast<float>(get<std::int32_t>(in, p) / 2147483648.0);
          }
          wav.channels[c][n] = v;
        }
      }
      return wav;
    }
    pos = body + size + (size & 1);
  }
  throw Error(Errc::Format, "missing data chunk");
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(Errc::Io, "cannot write " + tmp.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error(Errc::Io, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(Errc::Io, "rename failed for " + path.string() + ": " + ec.message());
}

void write_wav(const std::filesystem::path& path, const WavData& wav) {
  write_file_atomic(path, encode_wav(wav));
}

WavData read_wav(const std::filesystem::path& path) { return decode_wav(read_file(path)); }

std::string sidecar_json(const RirSet& set) {
  json j;
  j["format"] = "echoplane-rirset";
  j["version"] = 1;
  j["fs"] = set.fs;
  j["c0"] = set.c0;
  j["num_mics"] = set.num_mics();
  j["num_sources"] = set.num_sources();
  j["channel_order"] = "mic-major";
  j["array"] = {{"center", point_json(set.array.center)}, {"mics", points_json(set.array.mics)}};
  j["sources"] = points_json(set.sources);
  if (set.sim) {
    const auto& s = *set.sim;
    j["simulation"] = {
        {"room",
         {{"dims", point_json(s.room.dims)},
          {"absorption", s.room.absorption},
          {"max_order", s.room.max_order}}},
        {"mic_perturbation", s.mic_perturbation},
        {"dnr_db", std::isfinite(s.dnr_db) ? json(s.dnr_db) : json(nullptr)},
        {"dnr_reference", "peak-sample-power"},
        {"perturbation_seed", s.perturbation_seed},
        {"noise_seed", s.noise_seed}};
  }
  if (set.truth) {
    const auto& t = *set.truth;
    json per = json::array();
    for (const auto& st : t.per_source) {
      per.push_back({{"wall", st.wall}, {"plane", plane_json(st.plane)}, {"image", point_json(st.image)}});
    }
    j["ground_truth"] = {{"reflector_wall", t.reflector_wall},
                         {"reflector", plane_json(t.reflector)},
                         {"per_source", per},
                         {"true_mics", points_json(t.true_mics)},
                         {"toa_direct", t.toa_direct},
                         {"toa_reflection", t.toa_reflection}};
  }
  return j.dump(2);
}

RirSet rirset_from_parts(WavData wav, std::string_view sidecar) {
  json j;
  try {
    j = json::parse(sidecar);
    RirSet set;
    set.fs = j.at("fs").get<double>();
    set.c0 = j.at("c0").get<double>();
    set.array.center = json_point(j.at("array").at("center"));
    set.array.mics = json_points(j.at("array").at("mics"));
    set.sources = json_points(j.at("sources"));
    if (j.contains("simulation")) {
      const auto& s = j["simulation"];
      SimulationInfo info;
      info.room.dims = json_point(s.at("room").at("dims"));
      info.room.absorption = s.at("room").at("absorption").get<double>();
      info.room.max_order = s.at("room").at("max_order").get<int>();
      info.mic_perturbation = s.at("mic_perturbation").get<double>();
      info.dnr_db = s.at("dnr_db").is_null() ? std::numeric_limits<double>::infinity()
                                             : s.at("dnr_db").get<double>();
      info.perturbation_seed = s.at("perturbation_seed").get<std::uint64_t>();
      info.noise_seed = s.at("noise_seed").get<std::uint64_t>();
      set.sim = info;
    }
    if (j.contains("ground_truth")) {
      const auto& t = j["ground_truth"];
      GroundTruth gt;
      gt.reflector_wall = t.at("reflector_wall").get<int>();
      gt.reflector = json_plane(t.at("reflector"));
      for (const auto& e : t.at("per_source")) {
        gt.per_source.push_back({e.at("wall").get<int>(), json_plane(e.at("plane")), json_point(e.at("image"))});
      }
      gt.true_mics = json_points(t.at("true_mics"));
      gt.toa_direct = t.at("toa_direct").get<std::vector<double>>();
      gt.toa_reflection = t.at("toa_reflection").get<std::vector<double>>();
      set.truth = gt;
    }
    if (std::lround(wav.fs) != std::lround(set.fs)) {
      throw Error(Errc::Format, "WAV sample rate differs from sidecar fs");
    }
    set.channels = std::move(wav.channels);
    set.validate();
    return set;
  } catch (const json::exception& e) {
    throw Error(Errc::Format, std::string("malformed sidecar: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::Format) throw;
    throw Error(Errc::Format, e.what());
  }
}

RirSet rirset_from_geometry(WavData wav, std::string_view geometry_json) {
  try {
    const json j = json::parse(geometry_json);
    RirSet set;
    set.fs = wav.fs;
    set.c0 = j.value("c0", kSpeedOfSound);
    set.array.mics = json_points(j.at("mics"));
    if (j.contains("center")) {
      set.array.center = json_point(j["center"]);
    } else {
      Point3 c = Point3::Zero();
      for (const auto& m : set.array.mics) c += m;
      set.array.center = c / static_cast<double>(std::max<std::size_t>(1, set.array.mics.size()));
    }
    set.sources = json_points(j.at("sources"));
    if (wav.channels.size() != set.array.size() * set.sources.size()) {
      throw Error(Errc::Format, "WAV has " + std::to_string(wav.channels.size()) +
                                    " channels, geometry implies " +
                                    std::to_string(set.array.size() * set.sources.size()));
    }
    set.channels = std::move(wav.channels);
    set.validate();
    return set;
  } catch (const json::exception& e) {
    throw Error(Errc::Format, std::string("malformed geometry: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::Format) throw;
    throw Error(Errc::Format, e.what());
  }
}

std::filesystem::path sidecar_path(const std::filesystem::path& wav_path) {
  auto p = wav_path;
  p.replace_extension(".json");
  return p;
}

void write_rirset(const RirSet& set, const std::filesystem::path& wav_path) {
  set.validate();
  write_wav(wav_path, WavData{set.fs, set.channels});
  write_file_atomic(sidecar_path(wav_path), sidecar_json(set));
}

RirSet read_rirset(const std::filesystem::path& wav_path) {
  return rirset_from_parts(read_wav(wav_path), read_file(sidecar_path(wav_path)));
}

std::string content_hash(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace echoplane
