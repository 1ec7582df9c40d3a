#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace gausssurf {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

inline constexpr const char* kVersion = "0.1.0";

/// Command-line driver: synth, train, extract-mesh, bind, refine, render, eval.
/// args[0] is the program name. Returns 0 on success, 1 on a usage error and 2
/// on a runtime error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

/// 64-bit FNV-1a, used for config and output fingerprints in run manifests.
std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull);
std::string file_fingerprint(const std::string& path);

} // namespace gausssurf
