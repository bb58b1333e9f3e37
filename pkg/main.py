"""
cogmask - revealed-preference IRL and cognition masking for cognitive radars
Console entry point: `python main.py run configs/waveform_eta.yaml`
"""
import sys

from cogmask.cli.main import main

if __name__ == "__main__":
    sys.exit(main())
