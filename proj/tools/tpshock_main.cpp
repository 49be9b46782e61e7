// Command line front end. Subcommands are registered as the corresponding
// library pieces land; run with --help for the current list.

#include <cstdio>

int main(int argc, char** argv) {
    (void)argc;
    (void)argv;
    std::puts("tpshock: no subcommands wired up yet");
    return 0;
}
