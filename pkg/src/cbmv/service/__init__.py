"""HTTP service wrapping the stereo pipeline; see app.create_app."""
