#pragma once

#include <json.hpp>
#include <string>

#include "factorlasso/bootstrap.hpp"
#include "factorlasso/cli.hpp"
#include "factorlasso/inference.hpp"
#include "factorlasso/iv.hpp"
#include "factorlasso/simulation.hpp"

namespace factorlasso {

inline constexpr const char* kSpecVersion = "1.0.0";

using Json = nlohmann::ordered_json;

Json config_json(const RunConfig& rc);
Json fit_json(const RunConfig& rc, const FactorLassoFit& fit);
Json bootstrap_json(const RunConfig& rc, const FactorLassoFit& fit,
                    const BootstrapResult& boot);
Json iv_json(const RunConfig& rc, const IVFit& fit);
Json factors_json(const RunConfig& rc, const Vector& eigvals, int k_max_used,
                  int k_selected);
Json simulate_json(const RunConfig& rc, const MonteCarloReport& report);
std::string simulate_csv(const MonteCarloReport& report);

// Writes text to path (stdout when empty), always with a trailing newline.
void emit_report(const std::string& text, const std::string& path);

}  // namespace factorlasso
