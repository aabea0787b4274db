#include "cli.hpp"

#include "fsdet/error.hpp"

#include <algorithm>
#include <iostream>

using namespace fsdet;

int main(int argc, char** argv) {
    CLI::App app{"Few-shot detection with similarity density maps and region alignment", "fsdet"};
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();
    cli::add_gen_synth(app);
    cli::add_train_ran(app);
    cli::add_detect(app);
    cli::add_evaluate(app);

    try {
        auto args = cli::expand_config(argc, argv);
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return cli::kUsage;
    } catch (const CLI::Error& e) {
        std::cerr << "fsdet: " << e.what() << "\n";
        return cli::kFailure;
    } catch (const InvalidArgument& e) {
        std::cerr << "fsdet: usage: " << e.what() << "\n";
        return cli::kUsage;
    } catch (const IoError& e) {
        std::cerr << "fsdet: " << e.what() << "\n";
        return cli::kIo;
    } catch (const NumericError& e) {
        std::cerr << "fsdet: numeric failure: " << e.what() << "\n";
        return cli::kNumeric;
    } catch (const EncodingDomainError& e) {
        std::cerr << "fsdet: numeric failure: " << e.what() << "\n";
        return cli::kNumeric;
    } catch (const CompatibilityError& e) {
        std::cerr << "fsdet: incompatible checkpoint: " << e.what() << "\n";
        return cli::kCompatibility;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "fsdet: " << e.what() << "\n";
        return cli::kIo;
    } catch (const std::exception& e) {
        std::cerr << "fsdet: " << e.what() << "\n";
        return cli::kFailure;
    }
    return cli::kOk;
}
