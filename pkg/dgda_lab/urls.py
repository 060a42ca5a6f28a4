from django.contrib import admin
from django.urls import path, include

urlpatterns = [
    path('admin/', admin.site.urls),
    # Experiment registry pages and exports
    path('', include('dgda.urls')),
]
