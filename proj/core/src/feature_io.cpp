#include "mdmer/feature_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "mdmer/errors.hpp"

namespace mdmer::dsp {
namespace {

static_assert(std::endian::native == std::endian::little,
              "feature container assumes a little-endian host");

constexpr std::array<char, 8> kMagic = {'M', 'D', 'M', 'F', 'E', 'A', 'T', '1'};

nlohmann::json config_to_json(const DspConfig& cfg) {
  return nlohmann::json{{"sample_rate", cfg.sample_rate}, {"n_fft", cfg.n_fft},
                        {"hop", cfg.hop},                 {"n_mels", cfg.n_mels},
                        {"n_mfcc", cfg.n_mfcc},           {"fmin", cfg.fmin},
                        {"fmax", cfg.fmax},               {"target_frames", cfg.target_frames},
                        {"log_floor", cfg.log_floor}};
}

}  // namespace

void write_feature_file(const std::string& path, const MixedFeature& feat, const DspConfig& cfg,
                        const std::string& clip_id) {
  nlohmann::json header{
      {"clip_id", clip_id},
      {"rows", feat.rows},
      {"cols", feat.cols},
      {"layout",
       {{"mel_rows", feat.layout.mel_rows},
        {"mfcc_rows", feat.layout.mfcc_rows},
        {"sc_rows", feat.layout.sc_rows},
        {"rmse_rows", feat.layout.rmse_rows}}},
      {"normalized", feat.normalized},
      {"dsp", config_to_json(cfg)},
  };
  const std::string htext = header.dump();
  if (htext.size() > 0xffffffffu) throw IoError("feature header too large");

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(kMagic.data(), kMagic.size());
  const auto hlen = static_cast<std::uint32_t>(htext.size());
  out.write(reinterpret_cast<const char*>(&hlen), 4);
  out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  out.write(reinterpret_cast<const char*>(feat.values.data()),
            static_cast<std::streamsize>(feat.values.size() * sizeof(float)));
  if (!out) throw IoError("failed writing " + path);
}

FeatureFile read_feature_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);

  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw FormatError(path + ": not an MDMFEAT1 file");

  std::uint32_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 4);
  if (!in) throw FormatError(path + ": truncated header length");
  std::string htext(hlen, '\0');
  in.read(htext.data(), hlen);
  if (!in) throw FormatError(path + ": truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(htext);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": bad header JSON: " + e.what());
  }

  FeatureFile file;
  file.header_json = htext;
  try {
    file.clip_id = header.at("clip_id").get<std::string>();
    file.feature.rows = header.at("rows").get<std::size_t>();
    file.feature.cols = header.at("cols").get<std::size_t>();
    const auto& layout = header.at("layout");
    file.feature.layout.mel_rows = layout.at("mel_rows").get<std::size_t>();
    file.feature.layout.mfcc_rows = layout.at("mfcc_rows").get<std::size_t>();
    file.feature.layout.sc_rows = layout.at("sc_rows").get<std::size_t>();
    file.feature.layout.rmse_rows = layout.at("rmse_rows").get<std::size_t>();
    file.feature.normalized = header.at("normalized").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": incomplete header: " + e.what());
  }

  const std::size_t count = file.feature.rows * file.feature.cols;
  file.feature.values.resize(count);
  in.read(reinterpret_cast<char*>(file.feature.values.data()),
          static_cast<std::streamsize>(count * sizeof(float)));
  if (!in) throw FormatError(path + ": truncated payload");
  return file;
}

}  // namespace mdmer::dsp
