// Copyright (c) 2026, The ATM-SAE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace atm {

/// Hex SHA-1 of "blob <size>\0<bytes>", as `git hash-object` computes it.
std::string git_blob_hash(std::string_view bytes);

/// Hash of the files' blob hashes joined in the given order. Throws IoError.
std::string hash_files(const std::vector<std::filesystem::path>& paths);

}  // namespace atm
