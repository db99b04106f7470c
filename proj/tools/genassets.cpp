// Regenerates the committed files under assets/ from the fixture definitions.

#include <cstdio>

#include "questlab/fixtures.hpp"

int main(int argc, char** argv) {
    const std::string dir = argc > 1 ? argv[1] : "assets";
    questlab::fixtures::write_assets(dir);
    std::printf("assets regenerated under %s\n", dir.c_str());
    return 0;
}
