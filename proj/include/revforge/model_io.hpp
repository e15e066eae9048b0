#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>

#include "revforge/langmodel.hpp"

namespace revforge {

std::string serialize_language_model(const LanguageModel& model);
std::unique_ptr<LanguageModel> deserialize_language_model(std::string_view bytes);

void save_language_model(const LanguageModel& model, const std::filesystem::path& path);
std::unique_ptr<LanguageModel> load_language_model(const std::filesystem::path& path);

}  // namespace revforge
