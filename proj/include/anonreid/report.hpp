#pragma once

#include <array>
#include <string>

#include "anonreid/metrics.hpp"

namespace anonreid {

// Simple plot renderers for the `report` CLI command.
void render_loss_curves(const std::string& loss_log_csv, const std::string& out_png);
void render_cmc_curves(const std::array<EvalReport, 4>& reports,
                       const std::array<std::string, 4>& names, const std::string& out_png);
void render_embedding_scatter(const std::string& embeddings_csv, const std::string& out_png);

// settings reports -> one CSV (rows per setting) and one JSON document
void write_settings_csv(const std::array<EvalReport, 4>& reports,
                        const std::array<std::string, 4>& names, const std::string& out_csv);
void write_settings_json(const std::array<EvalReport, 4>& reports,
                         const std::array<std::string, 4>& names, const std::string& out_json);
std::array<EvalReport, 4> read_settings_json(const std::string& path,
                                             std::array<std::string, 4>& names);

}  // namespace anonreid
