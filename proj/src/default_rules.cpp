#include "radpert/rule_dsl.hpp"

namespace radpert::rules {

namespace {

// Bundled starter set. The Cardiomegaly block follows the published rule
// shapes; every other pathology carries keyword-level approximations and is
// marked as such.
const char kDefaultRulesText[] = R"(# Starter rule set.
# Cardiomegaly rules reproduce the published shapes (mention, negation,
# uncertainty). All other pathologies use keyword approximations; they are
# not authoritative and are expected to be replaced for serious use.

# --- Cardiomegaly ---

rule cm_m1 Cardiomegaly mention
node o1 OBS ".*cardiomegaly.*" anchor

rule cm_m2 Cardiomegaly mention
node o1 OBS ".*enlarge.*" anchor
node a1 ANAT ".*heart.*"
edge o1 -located_at-> a1

# Any observation attached to the heart anatomy counts as a mention; the
# observation's attribute then drives the initial class.
rule cm_m3 Cardiomegaly mention
node o1 OBS ".*" anchor
node a1 ANAT ".*heart.*"
edge o1 -any-> a1

rule cm_n1 Cardiomegaly negation
node o1 OBS ".*normal.*" anchor
node a1 ANAT ".*heart.*"
edge o1 -any-> a1

rule cm_n2 Cardiomegaly negation
node o1 OBS ".*normal.*" anchor
node o2 OBS ".*size.*"
node a1 ANAT ".*heart.*"
edge o1 -modify-> o2
edge o2 -located_at-> a1

rule cm_u1 Cardiomegaly uncertainty
node o1 OBS ".*borderline.*" anchor
node a1 ANAT ".*heart.*"
edge o1 -any-> a1

# --- Enlarged Cardiomediastinum (approximation) ---

rule ec_m1 Enlarged_Cardiomediastinum mention
node o1 OBS ".*enlarge.*" anchor
node a1 ANAT ".*mediastin.*"
edge o1 -any-> a1

rule ec_m2 Enlarged_Cardiomediastinum mention
node o1 OBS ".*widen.*" anchor
node a1 ANAT ".*mediastin.*"
edge o1 -any-> a1

# --- Atelectasis (approximation) ---

rule at_m1 Atelectasis mention
node o1 OBS ".*atelecta.*" anchor

# --- Consolidation (approximation) ---

rule co_m1 Consolidation mention
node o1 OBS ".*consolidat.*" anchor

# --- Edema (approximation; ".*edema.*" also covers "oedema") ---

rule ed_m1 Edema mention
node o1 OBS ".*edema.*" anchor

# --- Fracture (approximation) ---

rule fr_m1 Fracture mention
node o1 OBS ".*fracture.*" anchor

# --- Lung Lesion (approximation) ---

rule ll_m1 Lung_Lesion mention
node o1 OBS ".*lesion.*" anchor

rule ll_m2 Lung_Lesion mention
node o1 OBS ".*nodul.*" anchor

rule ll_m3 Lung_Lesion mention
node o1 OBS "mass" anchor

# --- Lung Opacity (approximation) ---

rule lo_m1 Lung_Opacity mention
node o1 OBS ".*opacit.*" anchor

rule lo_m2 Lung_Opacity mention
node o1 OBS ".*opacif.*" anchor

# --- Pleural Effusion (approximation) ---

rule pe_m1 Pleural_Effusion mention
node o1 OBS ".*effusion.*" anchor

rule pe_m2 Pleural_Effusion mention
node o1 OBS ".*effusion.*" anchor
node a1 ANAT ".*pleur.*"
edge o1 -located_at-> a1

# --- Pleural Other (approximation) ---

rule po_m1 Pleural_Other mention
node o1 OBS ".*thicken.*" anchor
node a1 ANAT ".*pleur.*"
edge o1 -any-> a1

rule po_m2 Pleural_Other mention
node o1 OBS ".*plaque.*" anchor
node a1 ANAT ".*pleur.*"
edge o1 -any-> a1

# --- Pneumonia (approximation) ---

rule pn_m1 Pneumonia mention
node o1 OBS ".*pneumonia.*" anchor

# --- Pneumothorax (approximation) ---

rule px_m1 Pneumothorax mention
node o1 OBS ".*pneumothora.*" anchor

# --- Support Devices (approximation) ---

rule sd_m1 Support_Devices mention
node o1 OBS "tube" anchor

rule sd_m2 Support_Devices mention
node o1 OBS "tubes" anchor

rule sd_m3 Support_Devices mention
node o1 OBS ".*catheter.*" anchor

rule sd_m4 Support_Devices mention
node o1 OBS ".*pacemaker.*" anchor

rule sd_m5 Support_Devices mention
node o1 OBS "line" anchor

rule sd_m6 Support_Devices mention
node o1 OBS "lines" anchor
)";

}  // namespace

const std::string& default_rules_text() {
  static const std::string text(kDefaultRulesText);
  return text;
}

const RuleSet& default_rules() {
  static const RuleSet set = parse_rule_file(default_rules_text());
  return set;
}

}  // namespace radpert::rules
