from spatial_se.logging_utils import init_logging
init_logging()  # colored console logs; quiet multiprocessing chatter by default

from spatial_se.cli import main

if __name__ == "__main__":
    # python run.py run --config conf/toy.yaml --stage 1-4 --jobs 4
    main()
