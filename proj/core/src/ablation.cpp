#include "metanav/ablation.hpp"

#include <map>
#include <stdexcept>
#include <utility>

namespace metanav {

namespace {

const std::vector<std::pair<const char*, bool AblationFlags::*>>& fields() {
  static const std::vector<std::pair<const char*, bool AblationFlags::*>> f = {
      {"use_uot", &AblationFlags::use_uot},
      {"use_tfg_uoi", &AblationFlags::use_tfg_uoi},
      {"use_mcfm", &AblationFlags::use_mcfm},
      {"use_mogl", &AblationFlags::use_mogl},
      {"mcfm_loss_on", &AblationFlags::mcfm_loss_on},
      {"cca_loss_on", &AblationFlags::cca_loss_on},
      {"mcfm_meta_on", &AblationFlags::mcfm_meta_on},
      {"mogl_meta_on", &AblationFlags::mogl_meta_on},
      {"use_gt_cls", &AblationFlags::use_gt_cls},
  };
  return f;
}

const std::map<std::string, AblationFlags, std::less<>>& presets() {
  static const std::map<std::string, AblationFlags, std::less<>> p = [] {
    std::map<std::string, AblationFlags, std::less<>> m;
    const AblationFlags full;
    m["full"] = full;
    AblationFlags none{false, false, false, false, false, false, false, false, false};
    m["baseline"] = none;
    AblationFlags uot = none;
    uot.use_uot = true;
    m["uot"] = uot;
    AblationFlags uoi = uot;
    uoi.use_tfg_uoi = true;
    m["uot_tfg_uoi"] = uoi;
    AblationFlags mcfm = uoi;
    mcfm.use_mcfm = mcfm.mcfm_loss_on = mcfm.mcfm_meta_on = true;
    m["uot_tfg_uoi_mcfm"] = mcfm;
    auto with = [&](bool AblationFlags::*field, bool v) {
      AblationFlags f = full;
      f.*field = v;
      return f;
    };
    m["no_mcfm_loss"] = with(&AblationFlags::mcfm_loss_on, false);
    m["no_cca_loss"] = with(&AblationFlags::cca_loss_on, false);
    m["no_mcfm_meta"] = with(&AblationFlags::mcfm_meta_on, false);
    m["no_mogl_meta"] = with(&AblationFlags::mogl_meta_on, false);
    m["gt_cls"] = with(&AblationFlags::use_gt_cls, true);
    return m;
  }();
  return p;
}

}  // namespace

void validate(const AblationFlags& f) {
  if (f.use_mogl && !f.use_mcfm) throw std::invalid_argument("MOGL requires MCFM");
  if (f.use_mcfm && !f.use_tfg_uoi) throw std::invalid_argument("MCFM requires TFG and UOI");
  if (f.use_gt_cls && !f.use_tfg_uoi) throw std::invalid_argument("GT CLS substitution requires UOI");
}

AblationFlags preset(std::string_view name) {
  auto it = presets().find(name);
  if (it == presets().end()) throw std::invalid_argument("unknown ablation preset '" + std::string(name) + "'");
  return it->second;
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"full",         "baseline",     "uot",          "uot_tfg_uoi",
                                                 "uot_tfg_uoi_mcfm", "no_mcfm_loss", "no_cca_loss", "no_mcfm_meta",
                                                 "no_mogl_meta", "gt_cls"};
  return names;
}

const std::vector<std::string>& component_rows() {
  static const std::vector<std::string> rows = {"baseline", "uot", "uot_tfg_uoi", "uot_tfg_uoi_mcfm", "full"};
  return rows;
}

const std::vector<std::string>& loss_meta_rows() {
  static const std::vector<std::string> rows = {"no_mcfm_loss", "no_cca_loss", "no_mcfm_meta", "no_mogl_meta",
                                                "full"};
  return rows;
}

AblationFlags parse_flags(std::string_view spec) {
  AblationFlags flags;
  std::size_t pos = 0;
  bool first = true;
  while (pos <= spec.size()) {
    const std::size_t end = std::min(spec.find(',', pos), spec.size());
    const std::string_view token = spec.substr(pos, end - pos);
    pos = end + 1;
    if (token.empty()) {
      if (end == spec.size()) break;
      continue;
    }
    const std::size_t eq = token.find('=');
    if (eq == std::string_view::npos) {
      if (!first) throw std::invalid_argument("preset must come first in a flag spec");
      flags = preset(token);
    } else {
      const std::string_view key = token.substr(0, eq), value = token.substr(eq + 1);
      if (value != "0" && value != "1") throw std::invalid_argument("flag value must be 0 or 1");
      bool found = false;
      for (const auto& [name, field] : fields()) {
        if (key == name) {
          flags.*field = value == "1";
          found = true;
        }
      }
      if (!found) throw std::invalid_argument("unknown flag '" + std::string(key) + "'");
    }
    first = false;
    if (end == spec.size()) break;
  }
  validate(flags);
  return flags;
}

std::string flags_to_string(const AblationFlags& flags) {
  std::string out;
  for (const auto& [name, field] : fields()) {
    if (!out.empty()) out += ',';
    out += name;
    out += flags.*field ? "=1" : "=0";
  }
  return out;
}

}  // namespace metanav
