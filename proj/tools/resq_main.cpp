#include "cli_app.hpp"

int main(int argc, char** argv) {
    return resq::cli_run(std::vector<std::string>(argv + 1, argv + argc));
}
