#pragma once

#include <string>
#include <vector>

namespace sct {

// Splits an identifier on underscores, camel-case boundaries and digit runs,
// lowercasing the pieces: "get_TrainingData" -> [get, training, data],
// "utf8" -> [utf, 8]. A token with no alphanumeric characters comes back as
// its lowercased self in a single slot.
std::vector<std::string> split_subtokens(const std::string& token_text);

}  // namespace sct
