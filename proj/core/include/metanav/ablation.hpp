#pragma once

// Component switches for the ablation matrix.

#include <string>
#include <string_view>
#include <vector>

namespace metanav {

struct AblationFlags {
  bool use_uot = true;       ///< unknown-object targets during training
  bool use_tfg_uoi = true;   ///< generated bank + identifier; off means CLS is never raised
  bool use_mcfm = true;      ///< relationship input z_r built from f_t'
  bool use_mogl = true;      ///< GCN over the object graph; off feeds raw node features
  bool mcfm_loss_on = true;  ///< inner L_mcfm steps
  bool cca_loss_on = true;   ///< inner L_cca steps
  bool mcfm_meta_on = true;  ///< task-local alpha, adapted at inference too
  bool mogl_meta_on = true;  ///< task-local beta for the L_cca steps, adapted at inference too
  bool use_gt_cls = false;   ///< replace the identifier's CLS with the ground truth

  friend bool operator==(const AblationFlags&, const AblationFlags&) = default;
};

/// Throws std::invalid_argument when a component is on while one it depends
/// on is off (MOGL needs MCFM, MCFM needs TFG + UOI, GT CLS replaces UOI's).
void validate(const AblationFlags& flags);

/// Named presets: full, baseline, uot, uot_tfg_uoi, uot_tfg_uoi_mcfm,
/// no_mcfm_loss, no_cca_loss, no_mcfm_meta, no_mogl_meta, gt_cls.
AblationFlags preset(std::string_view name);
const std::vector<std::string>& preset_names();

/// Rows of the component table, in order, and of the loss/meta table.
const std::vector<std::string>& component_rows();
const std::vector<std::string>& loss_meta_rows();

/// "name[,key=0|1]...": an optional preset followed by overrides, e.g.
/// "full,use_gt_cls=1". Validates the result.
AblationFlags parse_flags(std::string_view spec);
/// Canonical "key=v" list covering every flag.
std::string flags_to_string(const AblationFlags& flags);

}  // namespace metanav
