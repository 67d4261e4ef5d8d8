"""
Main entry point for the Losse-FTL experiment CLI
Run with: python main.py <stream|denoise|encoder-bench|gd-vs-ftl|dyna|plot> [options]
"""
import os
import sys

# Make the repository root importable when launched from elsewhere
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from backend.api.cli import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
