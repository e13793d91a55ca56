#pragma once

#include "json.hpp"

#include "psda/association.hpp"
#include "psda/fusion.hpp"
#include "psda/gaussmix.hpp"
#include "psda/semantics.hpp"
#include "psda/survey.hpp"

// JSON wire formats shared by the harness reports, the session bridge and the C API.
// Malformed input raises psda::Error with kInvalidArgument.
namespace psda::io {

using Json = nlohmann::json;

/// {"weights":[...],"means":[[...],...],"covariances":[[[...]],...]}
Json to_json(const GaussianMixture& gm);
GaussianMixture gm_from_json(const Json& j);

/// {"polarity":"positive","mineral":"calcite","label":"near_ahead","frame":{"kind":"rover"},"k":72}
Json to_json(const SemanticObservation& obs);
SemanticObservation observation_from_json(const Json& j);

/// {"gamma":[...],"candidates":[...],"normalizers":[...]}
Json to_json(const AssociationResult& r);

Json to_json(const FusionResult& r);

Json to_json(const ObservationEvent& ev);
ObservationEvent event_from_json(const Json& j);

Json to_json(const MissionRecord& rec);
MissionRecord record_from_json(const Json& j);

/// Parses text, mapping syntax errors to kInvalidArgument.
Json parse(std::string_view text);

}  // namespace psda::io
