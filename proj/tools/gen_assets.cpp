// Regenerates the built-in demo assets (meshes, registry, scripts, configs).
// Usage: asmpose_gen_assets [output_dir]   (default: assets)

#include <iostream>

#include "asmpose/builtin.hpp"

int main(int argc, char** argv) {
    const std::filesystem::path dir = (argc > 1) ? argv[1] : "assets";
    try {
        asmpose::builtin::write_builtin_assets(dir);
    } catch (const asmpose::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    std::cout << "wrote builtin assets to " << dir.string() << "\n";
    return 0;
}
