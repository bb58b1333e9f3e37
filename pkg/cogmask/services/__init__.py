# Services: IRL tests, margins, masking, detectors and scenarios
